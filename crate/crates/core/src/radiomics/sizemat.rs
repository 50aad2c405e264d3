//! Shared statistics of "gray level x size" matrices (run length, zone size,
//! dependence count). Rows are gray levels `1..=N_g`, columns are sizes `1..`.

/// Counts `P[level-1][size-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeMatrix {
    pub n_levels: usize,
    pub max_size: usize,
    pub counts: Vec<u64>,
}

/// Emphasis and non-uniformity statistics shared by GLRLM, GLSZM and GLDM.
#[derive(Debug, Clone, Copy, Default)]
pub struct SizeStats {
    pub total: f64,
    pub small_emphasis: f64,
    pub large_emphasis: f64,
    pub gray_nonuniformity: f64,
    pub gray_nonuniformity_norm: f64,
    pub size_nonuniformity: f64,
    pub size_nonuniformity_norm: f64,
    pub gray_variance: f64,
    pub size_variance: f64,
    pub entropy: f64,
    pub low_gray_emphasis: f64,
    pub high_gray_emphasis: f64,
    pub small_low_gray: f64,
    pub small_high_gray: f64,
    pub large_low_gray: f64,
    pub large_high_gray: f64,
}

impl SizeMatrix {
    pub fn new(n_levels: usize, entries: impl IntoIterator<Item = (u32, usize)>) -> Self {
        let entries: Vec<(u32, usize)> = entries.into_iter().collect();
        let max_size = entries.iter().map(|e| e.1).max().unwrap_or(0);
        let mut counts = vec![0u64; n_levels * max_size];
        for (level, size) in entries {
            counts[(level as usize - 1) * max_size + size - 1] += 1;
        }
        SizeMatrix { n_levels, max_size, counts }
    }

    pub fn get(&self, level: usize, size: usize) -> u64 {
        self.counts[(level - 1) * self.max_size + size - 1]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn stats(&self) -> SizeStats {
        let total = self.total() as f64;
        let mut s = SizeStats { total, ..Default::default() };
        if total == 0.0 {
            return s;
        }
        let mut row = vec![0.0; self.n_levels];
        let mut col = vec![0.0; self.max_size];
        let (mut mu_i, mut mu_j) = (0.0, 0.0);
        for li in 0..self.n_levels {
            for sj in 0..self.max_size {
                let c = self.counts[li * self.max_size + sj] as f64;
                if c == 0.0 {
                    continue;
                }
                let (i, j) = ((li + 1) as f64, (sj + 1) as f64);
                let (i2, j2) = (i * i, j * j);
                row[li] += c;
                col[sj] += c;
                s.small_emphasis += c / j2;
                s.large_emphasis += c * j2;
                s.low_gray_emphasis += c / i2;
                s.high_gray_emphasis += c * i2;
                s.small_low_gray += c / (i2 * j2);
                s.small_high_gray += c * i2 / j2;
                s.large_low_gray += c * j2 / i2;
                s.large_high_gray += c * i2 * j2;
                let p = c / total;
                mu_i += p * i;
                mu_j += p * j;
                s.entropy -= p * p.log2();
            }
        }
        for li in 0..self.n_levels {
            for sj in 0..self.max_size {
                let c = self.counts[li * self.max_size + sj] as f64;
                if c > 0.0 {
                    let p = c / total;
                    s.gray_variance += p * ((li + 1) as f64 - mu_i).powi(2);
                    s.size_variance += p * ((sj + 1) as f64 - mu_j).powi(2);
                }
            }
        }
        for v in [
            &mut s.small_emphasis,
            &mut s.large_emphasis,
            &mut s.low_gray_emphasis,
            &mut s.high_gray_emphasis,
            &mut s.small_low_gray,
            &mut s.small_high_gray,
            &mut s.large_low_gray,
            &mut s.large_high_gray,
        ] {
            *v /= total;
        }
        let gn: f64 = row.iter().map(|r| r * r).sum();
        let sn: f64 = col.iter().map(|c| c * c).sum();
        s.gray_nonuniformity = gn / total;
        s.gray_nonuniformity_norm = gn / (total * total);
        s.size_nonuniformity = sn / total;
        s.size_nonuniformity_norm = sn / (total * total);
        s
    }
}
