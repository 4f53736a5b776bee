//! Few-shot regression meta-datasets: sine waves, harmonics (sum of two
//! sines) and a mixture of sine waves and lines.
//!
//! Task `i` is derived purely from `(seed, meta-split, i)` by a counter-keyed
//! generator, so it is the same task no matter when or how often it is
//! requested. This is extensionally the same as sampling every task's
//! parameters once up front, without storing them.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;
use crate::tasks::{
    check_index, Example, ExampleId, InputSource, MetaDataset, MetaSplit, Target, TaskDataset,
    TaskDescriptor, TaskKind,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinusoidParams {
    pub amplitude: f64,
    pub phase: f64,
}

/// `a1·sin(ω·x + b1) + a2·sin(2ω·x + b2)`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub frequency: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineParams {
    pub slope: f64,
    pub intercept: f64,
}

/// The function behind one toy task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ToyParams {
    Sinusoid(SinusoidParams),
    Harmonic(HarmonicParams),
    Line(LineParams),
}

impl ToyParams {
    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            ToyParams::Sinusoid(p) => p.amplitude * (x + p.phase).sin(),
            ToyParams::Harmonic(p) => {
                p.a1 * (p.frequency * x + p.b1).sin() + p.a2 * (2.0 * p.frequency * x + p.b2).sin()
            }
            ToyParams::Line(p) => p.slope * x + p.intercept,
        }
    }

    pub(crate) fn values(&self) -> Vec<f64> {
        match *self {
            ToyParams::Sinusoid(p) => vec![0.0, p.amplitude, p.phase],
            ToyParams::Harmonic(p) => vec![1.0, p.a1, p.a2, p.b1, p.b2, p.frequency],
            ToyParams::Line(p) => vec![2.0, p.slope, p.intercept],
        }
    }
}

impl fmt::Display for ToyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToyParams::Sinusoid(p) => write!(f, "sin(a={:.4}, b={:.4})", p.amplitude, p.phase),
            ToyParams::Harmonic(p) => write!(
                f,
                "harmonic(a1={:.4}, a2={:.4}, b1={:.4}, b2={:.4}, w={:.4})",
                p.a1, p.a2, p.b1, p.b2, p.frequency
            ),
            ToyParams::Line(p) => write!(f, "line(m={:.4}, c={:.4})", p.slope, p.intercept),
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    fn check(&self, name: &str, strict: bool) -> Result<()> {
        let ok = self.lo.is_finite() && self.hi.is_finite() && if strict { self.lo < self.hi } else { self.lo <= self.hi };
        if !ok {
            return Err(Error::Config(format!("invalid {name} range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Defaults follow the usual MAML sinusoid setup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyConfig {
    pub num_samples_per_task: usize,
    pub num_tasks: u64,
    /// Standard deviation of additive Gaussian noise; `None` is noiseless.
    pub noise_std: Option<f64>,
    pub input_range: Range,
    pub amplitude_range: Range,
    pub phase_range: Range,
    pub frequency_range: Range,
    pub slope_range: Range,
    pub intercept_range: Range,
    pub seed: u64,
    pub meta_split: MetaSplit,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            num_samples_per_task: 10,
            num_tasks: 1_000_000,
            noise_std: None,
            input_range: Range::new(-5.0, 5.0),
            amplitude_range: Range::new(0.1, 5.0),
            phase_range: Range::new(0.0, std::f64::consts::PI),
            frequency_range: Range::new(0.5, 2.0),
            slope_range: Range::new(-3.0, 3.0),
            intercept_range: Range::new(-3.0, 3.0),
            seed: 0,
            meta_split: MetaSplit::Train,
        }
    }
}

impl ToyConfig {
    fn validate(&self) -> Result<()> {
        self.input_range.check("input", true)?;
        self.amplitude_range.check("amplitude", false)?;
        self.phase_range.check("phase", false)?;
        self.frequency_range.check("frequency", false)?;
        self.slope_range.check("slope", false)?;
        self.intercept_range.check("intercept", false)?;
        if let Some(s) = self.noise_std {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("noise std must be non-negative, got {s}")));
            }
        }
        if self.num_samples_per_task == 0 {
            return Err(Error::Config("tasks need at least one sample".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyFamily {
    Sinusoid,
    Harmonic,
    SinusoidAndLine,
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    family: ToyFamily,
    config: ToyConfig,
}

pub fn sinusoid_dataset(config: ToyConfig) -> Result<ToyDataset> {
    ToyDataset::new(ToyFamily::Sinusoid, config)
}

pub fn harmonic_dataset(config: ToyConfig) -> Result<ToyDataset> {
    ToyDataset::new(ToyFamily::Harmonic, config)
}

pub fn sinusoid_and_line_dataset(config: ToyConfig) -> Result<ToyDataset> {
    ToyDataset::new(ToyFamily::SinusoidAndLine, config)
}

impl ToyDataset {
    pub fn new(family: ToyFamily, config: ToyConfig) -> Result<Self> {
        config.validate()?;
        Ok(ToyDataset { family, config })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn family(&self) -> ToyFamily {
        self.family
    }

    fn task_rng(&self, index: u64) -> ChaCha8Rng {
        let stream = seed::mix(self.config.seed, self.config.meta_split.code());
        seed::rng_for(stream, index)
    }

    fn sample_params(&self, rng: &mut ChaCha8Rng) -> ToyParams {
        let c = &self.config;
        let sinusoid = |rng: &mut ChaCha8Rng| {
            ToyParams::Sinusoid(SinusoidParams {
                amplitude: c.amplitude_range.sample(rng),
                phase: c.phase_range.sample(rng),
            })
        };
        match self.family {
            ToyFamily::Sinusoid => sinusoid(rng),
            ToyFamily::Harmonic => ToyParams::Harmonic(HarmonicParams {
                a1: c.amplitude_range.sample(rng),
                a2: c.amplitude_range.sample(rng),
                b1: c.phase_range.sample(rng),
                b2: c.phase_range.sample(rng),
                frequency: c.frequency_range.sample(rng),
            }),
            ToyFamily::SinusoidAndLine => {
                if rng.random_bool(0.5) {
                    sinusoid(rng)
                } else {
                    ToyParams::Line(LineParams {
                        slope: c.slope_range.sample(rng),
                        intercept: c.intercept_range.sample(rng),
                    })
                }
            }
        }
    }

    /// Function parameters of task `index`.
    pub fn params(&self, index: u64) -> Result<ToyParams> {
        check_index(index, self.config.num_tasks)?;
        Ok(self.sample_params(&mut self.task_rng(index)))
    }
}

impl MetaDataset for ToyDataset {
    fn num_tasks(&self) -> u64 {
        self.config.num_tasks
    }

    fn meta_split(&self) -> MetaSplit {
        self.config.meta_split
    }

    fn task_kind(&self) -> TaskKind {
        TaskKind::Regression
    }

    fn get_task(&self, index: u64) -> Result<TaskDataset> {
        check_index(index, self.config.num_tasks)?;
        let mut rng = self.task_rng(index);
        let params = self.sample_params(&mut rng);
        let noise = match self.config.noise_std {
            Some(s) if s > 0.0 => Some(Normal::new(0.0, s).map_err(|e| Error::Config(e.to_string()))?),
            _ => None,
        };
        let examples = (0..self.config.num_samples_per_task)
            .map(|j| {
                let x = self.config.input_range.sample(&mut rng);
                let mut y = params.evaluate(x);
                if let Some(n) = &noise {
                    y += n.sample(&mut rng);
                }
                Example {
                    id: ExampleId { class: 0, index: j },
                    input: InputSource::Dense(Arc::from(vec![x])),
                    target: Target::Values(Arc::from(vec![y])),
                }
            })
            .collect();
        Ok(TaskDataset {
            descriptor: TaskDescriptor::Toy { index, params },
            kind: TaskKind::Regression,
            input_shape: vec![1],
            target_shape: vec![1],
            examples,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    fn xy(task: &TaskDataset) -> Vec<(f64, f64)> {
        task.examples
            .iter()
            .map(|e| {
                let x = e.load_input().unwrap()[0];
                let Target::Values(y) = &e.target else { panic!() };
                (x, y[0])
            })
            .collect()
    }

    #[test]
    fn listing_configuration() {
        let ds = sinusoid_dataset(ToyConfig {
            num_samples_per_task: 10,
            num_tasks: 1_000_000,
            noise_std: None,
            ..ToyConfig::default()
        })
        .unwrap();
        assert_eq!(ds.num_tasks(), 1_000_000);
        let task = ds.get_task(999_999).unwrap();
        assert_eq!(task.examples.len(), 10);
        let TaskDescriptor::Toy { params, .. } = task.descriptor else { panic!() };
        for (x, y) in xy(&task) {
            assert_eq!(y, params.evaluate(x));
        }
        assert!(ds.get_task(1_000_000).is_err());
    }

    #[test]
    fn closed_forms() {
        let s = ToyParams::Sinusoid(SinusoidParams { amplitude: 1.0, phase: 0.0 });
        assert_eq!(s.evaluate(0.0), 0.0);
        assert_eq!(s.evaluate(FRAC_PI_2), 1.0);
        let h = ToyParams::Harmonic(HarmonicParams { a1: 1.0, a2: 1.0, b1: 0.0, b2: 0.0, frequency: 1.0 });
        assert_eq!(h.evaluate(0.0), 0.0);
        let reduced = ToyParams::Harmonic(HarmonicParams { a1: 2.0, a2: 0.0, b1: 0.3, b2: 1.1, frequency: 1.7 });
        for x in [-2.0, 0.1, 3.3] {
            assert_eq!(reduced.evaluate(x), 2.0 * (1.7 * x + 0.3).sin());
        }
        let flat = ToyParams::Line(LineParams { slope: 0.0, intercept: 3.0 });
        assert!([-5.0, 0.0, 4.2].iter().all(|&x| flat.evaluate(x) == 3.0));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let bad = ToyConfig {
            input_range: Range::new(1.0, 1.0),
            ..ToyConfig::default()
        };
        assert!(matches!(sinusoid_dataset(bad), Err(Error::Config(_))));
        let bad = ToyConfig {
            noise_std: Some(-0.1),
            ..ToyConfig::default()
        };
        assert!(harmonic_dataset(bad).is_err());
        let bad = ToyConfig {
            amplitude_range: Range::new(2.0, 1.0),
            ..ToyConfig::default()
        };
        assert!(sinusoid_and_line_dataset(bad).is_err());
    }

    #[test]
    fn splits_draw_different_tasks() {
        let train = sinusoid_dataset(ToyConfig::default()).unwrap();
        let test = sinusoid_dataset(ToyConfig {
            meta_split: MetaSplit::Test,
            ..ToyConfig::default()
        })
        .unwrap();
        assert_ne!(train.params(0).unwrap(), test.params(0).unwrap());
    }

    #[test]
    fn seed_changes_the_mixture() {
        let a = sinusoid_and_line_dataset(ToyConfig { seed: 1, ..ToyConfig::default() }).unwrap();
        let b = sinusoid_and_line_dataset(ToyConfig { seed: 2, ..ToyConfig::default() }).unwrap();
        let differ = (0..20).filter(|&i| a.params(i).unwrap() != b.params(i).unwrap()).count();
        assert_eq!(differ, 20);
    }
}
