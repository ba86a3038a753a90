use std::hint::black_box;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{compute_sufficient_stats, lae_loss, prefix_losses_efficient, prefix_losses_naive};
use crate::rng::{derive_seed, gaussian_matrix, rng_from_seed};
use crate::training::{init_model, Provenance};

/// Cartesian grid of `(n, p, d)` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub repeats: usize,
    /// Upper bound on the working set of any one cell.
    pub max_bytes: usize,
    pub seed: u64,
}

impl BenchGrid {
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &p in &self.p {
                for &d in &self.d {
                    out.push((n, p, d));
                }
            }
        }
        out
    }

    /// Rough peak bytes of a cell: data, one reconstruction, the model.
    pub fn cell_bytes(n: usize, p: usize, d: usize) -> usize {
        8 * (3 * p * n + 2 * d * n + 3 * p * d)
    }

    pub fn check(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        let cells = self.cells();
        if cells.is_empty() {
            return Err(Error::Config("benchmark grid is empty".into()));
        }
        for (n, p, d) in cells {
            if n == 0 || p == 0 || d == 0 || d > p {
                return Err(Error::Config(format!("invalid cell n={n} p={p} d={d}")));
            }
            let bytes = Self::cell_bytes(n, p, d);
            if bytes > self.max_bytes {
                return Err(Error::Config(format!(
                    "cell n={n} p={p} d={d} needs about {bytes} bytes, over the {} byte budget",
                    self.max_bytes
                )));
            }
        }
        Ok(())
    }
}

/// Median and range of repeated wall-clock measurements, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median: f64,
    /// `max - min`; absent for a single repeat.
    pub range: Option<f64>,
}

fn time_repeats(repeats: usize, mut f: impl FnMut()) -> Timing {
    f();
    let mut t: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    let mid = t.len() / 2;
    let median = if t.len() % 2 == 1 {
        t[mid]
    } else {
        0.5 * (t[mid - 1] + t[mid])
    };
    Timing {
        median,
        range: (repeats > 1).then(|| t[t.len() - 1] - t[0]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    /// One `‖X - ABX‖²` evaluation.
    pub lae: Timing,
    /// All `d` prefix losses, each reconstructed separately.
    pub naive: Timing,
    /// All `d` prefix losses from the shared statistics.
    pub efficient: Timing,
}

impl BenchCell {
    pub fn efficient_over_lae(&self) -> f64 {
        self.efficient.median / self.lae.median
    }

    pub fn efficient_over_naive(&self) -> f64 {
        self.efficient.median / self.naive.median
    }
}

/// Times the three evaluations on Gaussian data. Each is run once
/// untimed before `repeats` timed calls.
pub fn bench_cell(n: usize, p: usize, d: usize, repeats: usize, seed: u64) -> Result<BenchCell> {
    let mut rng = rng_from_seed(derive_seed(seed, ((n as u64) << 40) ^ ((p as u64) << 20) ^ d as u64));
    let x = gaussian_matrix(p, n, &mut rng);
    let model = init_model(p, d, false, &mut rng);
    let mut failure = None;
    let mut guard = |r: Result<()>| {
        if let Err(e) = r {
            failure.get_or_insert(e);
        }
    };
    let lae = time_repeats(repeats, || {
        guard(lae_loss(&model, &x).map(|v| {
            black_box(v);
        }))
    });
    let naive = time_repeats(repeats, || {
        guard(prefix_losses_naive(&model, &x).map(|v| {
            black_box(v);
        }))
    });
    let efficient = time_repeats(repeats, || {
        guard(compute_sufficient_stats(&model, &x).map(|s| {
            black_box(prefix_losses_efficient(&s));
        }))
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(BenchCell {
        n,
        p,
        d,
        lae,
        naive,
        efficient,
    })
}

/// Runs cells one after another so timings do not compete for cores.
pub fn run_bench(grid: &BenchGrid) -> Result<Vec<BenchCell>> {
    grid.check()?;
    grid.cells()
        .into_iter()
        .map(|(n, p, d)| {
            let cell = bench_cell(n, p, d, grid.repeats, grid.seed)?;
            log::info!(
                "n={n} p={p} d={d}: efficient/lae {:.2}, efficient/naive {:.3}",
                cell.efficient_over_lae(),
                cell.efficient_over_naive()
            );
            Ok(cell)
        })
        .collect()
}

/// One row per cell. Range columns appear only when `repeats > 1`.
pub fn write_bench_csv(path: &Path, prov: &Provenance, cells: &[BenchCell], repeats: usize) -> Result<()> {
    let mut buf = Vec::new();
    let io = |e| Error::io(path, e);
    writeln!(buf, "# config_sha256={} seed={}", prov.config_sha256, prov.seed).map_err(io)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["n", "p", "d", "repeats", "lae_s", "naive_s", "efficient_s"];
        if repeats > 1 {
            header.extend(["lae_range_s", "naive_range_s", "efficient_range_s"]);
        }
        header.extend(["efficient_over_lae", "efficient_over_naive"]);
        w.write_record(&header)?;
        for c in cells {
            let mut rec = vec![
                c.n.to_string(),
                c.p.to_string(),
                c.d.to_string(),
                repeats.to_string(),
                c.lae.median.to_string(),
                c.naive.median.to_string(),
                c.efficient.median.to_string(),
            ];
            if repeats > 1 {
                for t in [c.lae, c.naive, c.efficient] {
                    rec.push(t.range.unwrap_or(0.0).to_string());
                }
            }
            rec.push(c.efficient_over_lae().to_string());
            rec.push(c.efficient_over_naive().to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_repeat_has_no_range() {
        let c = bench_cell(32, 8, 4, 1, 0).unwrap();
        assert!(c.lae.range.is_none());
        assert!(c.efficient.median > 0.0);
        let c = bench_cell(32, 8, 4, 3, 0).unwrap();
        assert!(c.naive.range.is_some());
    }

    #[test]
    fn budget_is_checked_before_work() {
        let grid = BenchGrid {
            n: vec![1 << 20],
            p: vec![1024],
            d: vec![8],
            repeats: 1,
            max_bytes: 1 << 20,
            seed: 0,
        };
        assert!(matches!(grid.check(), Err(Error::Config(_))));
    }
}
