//! Seeded synthetic multi-series streams with piecewise regimes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    /// `level + spread * u_i`, with `u_i` a fixed per-series offset in [-1, 1).
    Constant { level: f64, spread: f64 },
    /// `level + spread * u_i + amplitude * sin(2π t / period)`, `t` the global sample index.
    Sine {
        level: f64,
        amplitude: f64,
        period: f64,
        spread: f64,
    },
    /// Non-negative base noise plus occasional exponential bursts, rainfall-like.
    SpikeMixture {
        base: f64,
        spike_prob: f64,
        spike_mean: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    /// First window of the regime.
    pub start_window: u64,
    /// One past the last window.
    pub end_window: u64,
    pub generator: Generator,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_streams: usize,
    /// Samples per series.
    pub total_length: usize,
    pub window_size: usize,
    pub regimes: Vec<Regime>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn n_windows_covered(&self) -> u64 {
        self.total_length.div_ceil(self.window_size) as u64
    }

    /// Checks that the regimes tile the sample range without gaps or overlap.
    pub fn validate(&self) -> Result<()> {
        if self.n_streams == 0 {
            return Err(Error::Config("synthetic stream needs at least one series".into()));
        }
        if self.window_size < 2 {
            return Err(Error::Config(format!("window size must be at least 2, got {}", self.window_size)));
        }
        let mut sorted: Vec<&Regime> = self.regimes.iter().collect();
        sorted.sort_by_key(|r| r.start_window);
        let mut next = 0u64;
        for r in &sorted {
            if r.end_window <= r.start_window {
                return Err(Error::Config(format!(
                    "regime [{}, {}) is empty",
                    r.start_window, r.end_window
                )));
            }
            if r.start_window < next {
                return Err(Error::Config(format!(
                    "regime starting at window {} overlaps the previous one",
                    r.start_window
                )));
            }
            if r.start_window > next {
                return Err(Error::Config(format!(
                    "windows {next}..{} are not covered by any regime",
                    r.start_window
                )));
            }
            if !(r.noise_sd >= 0.0 && r.noise_sd.is_finite()) {
                return Err(Error::Config(format!("noise sd must be finite and >= 0, got {}", r.noise_sd)));
            }
            check_generator(&r.generator)?;
            next = r.end_window;
        }
        let needed = self.n_windows_covered();
        if next != needed {
            return Err(Error::Config(format!(
                "regimes cover {next} windows but the stream spans {needed}"
            )));
        }
        Ok(())
    }

    /// Index into `regimes` of the regime that generates window `j`.
    pub fn regime_of_window(&self, j: u64) -> Option<usize> {
        self.regimes
            .iter()
            .position(|r| r.start_window <= j && j < r.end_window)
    }
}

/// The four generators used by [`planted_regimes`], in cycle order.
pub const PLANTED_GENERATORS: [(Generator, f64); 4] = [
    (Generator::Constant { level: 0.0, spread: 1.0 }, 0.3),
    (
        Generator::Sine {
            level: 5.0,
            amplitude: 3.0,
            period: 30.0,
            spread: 1.0,
        },
        0.3,
    ),
    (
        Generator::SpikeMixture {
            base: 1.0,
            spike_prob: 0.05,
            spike_mean: 8.0,
        },
        0.5,
    ),
    (Generator::Constant { level: 12.0, spread: 3.0 }, 0.5),
];

/// A stream cycling through four distinct regimes in blocks of
/// `block_windows` windows.
pub fn planted_regimes(
    n_streams: usize,
    total_length: usize,
    window_size: usize,
    block_windows: u64,
    seed: u64,
) -> SynthSpec {
    let n_windows = total_length.div_ceil(window_size.max(1)) as u64;
    let block = block_windows.max(1);
    let regimes = (0..n_windows.div_ceil(block))
        .map(|b| {
            let (generator, noise_sd) = PLANTED_GENERATORS[(b % 4) as usize];
            Regime {
                start_window: b * block,
                end_window: ((b + 1) * block).min(n_windows),
                generator,
                noise_sd,
            }
        })
        .collect();
    SynthSpec {
        n_streams,
        total_length,
        window_size,
        regimes,
        seed,
    }
}

fn check_generator(g: &Generator) -> Result<()> {
    let ok = match *g {
        Generator::Constant { level, spread } => level.is_finite() && spread.is_finite(),
        Generator::Sine {
            level,
            amplitude,
            period,
            spread,
        } => level.is_finite() && amplitude.is_finite() && spread.is_finite() && period > 0.0 && period.is_finite(),
        Generator::SpikeMixture {
            base,
            spike_prob,
            spike_mean,
        } => base.is_finite() && (0.0..=1.0).contains(&spike_prob) && spike_mean > 0.0 && spike_mean.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid generator parameters {g:?}")))
    }
}

/// Generates the stream as time-major rows: `rows[t][i]` is series `i` at sample `t`.
pub fn generate_synth(spec: &SynthSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offsets: Vec<f64> = (0..spec.n_streams).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut rows = Vec::with_capacity(spec.total_length);
    let mut current: Option<(usize, Option<Exp<f64>>)> = None;
    for t in 0..spec.total_length {
        let j = (t / spec.window_size) as u64;
        let r_idx = spec.regime_of_window(j).expect("validated tiling");
        if current.as_ref().map(|c| c.0) != Some(r_idx) {
            let exp = match spec.regimes[r_idx].generator {
                Generator::SpikeMixture { spike_mean, .. } => Some(Exp::new(1.0 / spike_mean).expect("validated mean")),
                _ => None,
            };
            current = Some((r_idx, exp));
        }
        let (_, exp) = current.as_ref().expect("set above");
        let regime = &spec.regimes[r_idx];
        let row = offsets
            .iter()
            .map(|&u| {
                let noise = if regime.noise_sd > 0.0 {
                    regime.noise_sd * std_normal.sample(&mut rng)
                } else {
                    0.0
                };
                match regime.generator {
                    Generator::Constant { level, spread } => level + spread * u + noise,
                    Generator::Sine {
                        level,
                        amplitude,
                        period,
                        spread,
                    } => {
                        let phase = std::f64::consts::TAU * t as f64 / period;
                        level + spread * u + amplitude * phase.sin() + noise
                    }
                    Generator::SpikeMixture { base, spike_prob, .. } => {
                        let mut v = (base + noise).max(0.0);
                        if rng.gen::<f64>() < spike_prob {
                            v += exp.as_ref().expect("spike regime").sample(&mut rng);
                        }
                        v
                    }
                }
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows in the wide layout with a `s0,s1,...` header. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_wide<W: Write>(rows: &[Vec<f64>], n_streams: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (0..n_streams).map(|i| format!("s{i}")).collect();
    w.write_record(&header).map_err(csv_err)?;
    let mut fields: Vec<String> = Vec::with_capacity(n_streams);
    for row in rows {
        fields.clear();
        fields.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}
