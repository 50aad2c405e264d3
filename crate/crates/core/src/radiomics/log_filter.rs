use crate::error::{Error, Result};
use crate::volume::Volume3D;

fn kernels(sigma_vox: f64) -> (Vec<f64>, Vec<f64>) {
    let radius = (4.0 * sigma_vox).ceil().max(1.0) as isize;
    let s2 = sigma_vox * sigma_vox;
    let g: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * s2)).exp()).collect();
    let norm: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / norm).collect();
    let mut g2: Vec<f64> = (-radius..=radius)
        .zip(&g)
        .map(|(x, gv)| ((x * x) as f64 - s2) / (s2 * s2) * gv)
        .collect();
    // zero DC response
    let mean = g2.iter().sum::<f64>() / g2.len() as f64;
    for v in &mut g2 {
        *v -= mean;
    }
    (g, g2)
}

fn convolve_axis(data: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis] as isize;
    let mut out = vec![0.0; data.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let pos = ((i / stride) % dims[axis]) as isize;
        let base = i as isize - pos * stride as isize;
        let mut acc = 0.0;
        for (k, w) in kernel.iter().enumerate() {
            let p = (pos + k as isize - r).clamp(0, n - 1);
            acc += w * data[(base + p * stride as isize) as usize];
        }
        *o = acc;
    }
    out
}

/// Scale-normalized Laplacian of Gaussian (`sigma^2 ∇²G * f`), `sigma` in mm.
/// Borders replicate the edge voxel.
pub fn laplacian_of_gaussian(vol: &Volume3D, sigma_mm: f64) -> Result<Volume3D> {
    if !(sigma_mm > 0.0) {
        return Err(Error::validation(format!("LoG sigma must be positive, got {sigma_mm}")));
    }
    let dims = vol.dims().0;
    let spacing = vol.spacing();
    let mut total = vec![0.0; vol.data().len()];
    for second in 0..3 {
        let mut cur = vol.data().to_vec();
        for axis in 0..3 {
            let (g, g2) = kernels(sigma_mm / spacing[axis]);
            // second derivative in voxel units -> mm units
            let k: Vec<f64> = if axis == second {
                g2.iter().map(|v| v / (spacing[axis] * spacing[axis])).collect()
            } else {
                g
            };
            cur = convolve_axis(&cur, dims, axis, &k);
        }
        for (t, c) in total.iter_mut().zip(cur) {
            *t += c;
        }
    }
    let s2 = sigma_mm * sigma_mm;
    Volume3D::new(vol.dims(), spacing, total.into_iter().map(|v| v * s2).collect(), format!("log-{sigma_mm}"))
}
