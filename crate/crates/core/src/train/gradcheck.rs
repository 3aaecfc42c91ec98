//! End-to-end central-difference check of the training objective.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::Result;
use crate::model::{video_label_from_segments, InitMode, ModelDims, ModelInput, ModelParams, SegmentLabels};
use crate::params::Parameters;
use crate::tensor::Vector;
use crate::train::guided::{AuxHead, AuxHeads, Trainable};
use crate::train::trainer::{example_grads, Example, Target};

pub const TINY_DIMS: ModelDims = ModelDims {
    audio: 5,
    visual: 7,
    hidden: 4,
    categories: 3,
};
pub const TINY_SEGMENTS: usize = 4;
pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Worst relative error for one loss under one init mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub init_mode: InitMode,
    pub loss: &'static str,
    pub entries: usize,
    pub max_rel_error: f64,
    /// Parameter entry with the largest error.
    pub worst: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < TOLERANCE
    }
}

impl std::fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "init\tloss\tentries\tmax_rel_error\tworst")?;
        for r in &self.results {
            writeln!(
                f,
                "{}\t{}\t{}\t{:.3e}\t{}",
                r.init_mode, r.loss, r.entries, r.max_rel_error, r.worst
            )?;
        }
        write!(
            f,
            "{}: max relative error {:.3e} (tolerance {TOLERANCE:e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error()
        )
    }
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn random_fill(p: &mut impl Parameters<f64>, rng: &mut impl Rng, scale: f64) {
    for (_, t) in p.tensors_mut() {
        for x in t {
            *x = rng.random_range(-scale..scale);
        }
    }
}

/// Random tiny-model instance for `mode`: parameters, input and segment labels.
pub fn tiny_instance(mode: InitMode, seed: u64) -> (Trainable<f64>, ModelInput<f64>, SegmentLabels) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let d = TINY_DIMS;
    let mut model = ModelParams::zeros(d, mode);
    random_fill(&mut model, &mut rng, 0.8);
    let aux = (mode == InitMode::LabelGuided).then(|| {
        let mut heads = AuxHeads {
            audio: AuxHead::zeros(d.hidden, d.outputs()),
            visual: AuxHead::zeros(d.hidden, d.outputs()),
        };
        random_fill(&mut heads, &mut rng, 0.8);
        heads
    });
    let mut seq = |dim: usize| -> Vec<Vector<f64>> {
        (0..TINY_SEGMENTS)
            .map(|_| Vector::from_vec((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    };
    let audio = seq(d.audio);
    let visual = seq(d.visual);
    let classes = (0..TINY_SEGMENTS)
        .map(|_| rng.random_range(0..=d.categories))
        .collect();
    let labels = SegmentLabels::new(classes, d.categories).expect("valid classes");
    (Trainable { model, aux }, ModelInput { audio, visual }, labels)
}

/// Checks every parameter entry of `params` against central differences of
/// the loss implied by `example`.
pub fn check_entries(params: &Trainable<f64>, example: &Example<f64>, aux_weight: f64) -> Result<(usize, f64, String)> {
    let (_, grads) = example_grads(params, example, aux_weight)?;
    let loss = |p: &Trainable<f64>| example_grads(p, example, aux_weight).map(|r| r.0);
    let mut probe = params.clone();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let grad_tensors = grads.tensors();
    let mut entries = 0;
    let mut worst = (0.0f64, String::new());
    for (ti, name) in names.iter().enumerate() {
        for e in 0..grad_tensors[ti].1.len() {
            let orig = probe.tensors()[ti].1[e];
            probe.tensors_mut()[ti].1[e] = orig + EPSILON;
            let up = loss(&probe)?;
            probe.tensors_mut()[ti].1[e] = orig - EPSILON;
            let down = loss(&probe)?;
            probe.tensors_mut()[ti].1[e] = orig;
            let numeric = (up - down) / (2.0 * EPSILON);
            let err = relative_error(grad_tensors[ti].1[e], numeric);
            if err > worst.0 || worst.1.is_empty() {
                worst = (err, format!("{name}[{e}]"));
            }
            entries += 1;
        }
    }
    Ok((entries, worst.0, worst.1))
}

/// Runs the check for both losses and every init mode with `params`
/// supplied by `make`.
pub fn gradcheck_with(
    mut make: impl FnMut(InitMode) -> (Trainable<f64>, ModelInput<f64>, SegmentLabels),
) -> Result<GradcheckReport> {
    let mut results = Vec::new();
    for mode in InitMode::ALL {
        let (params, input, labels) = make(mode);
        let video = video_label_from_segments(&labels)?;
        let targets = [
            ("supervised", Target::Segments { labels, video: video.clone() }),
            ("weak", Target::Video(video)),
        ];
        for (loss, target) in targets {
            let example = Example {
                input: input.clone(),
                target,
            };
            let (entries, max_rel_error, worst) = check_entries(&params, &example, 1.0)?;
            results.push(CheckResult {
                init_mode: mode,
                loss,
                entries,
                max_rel_error,
                worst,
            });
        }
    }
    Ok(GradcheckReport { results })
}

/// The tiny-model check on a random instance drawn from `seed`.
pub fn gradcheck(seed: u64) -> Result<GradcheckReport> {
    gradcheck_with(|mode| tiny_instance(mode, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::fault;

    #[test]
    fn correct_implementation_passes() {
        let report = gradcheck(0).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.max_rel_error() < 1e-6, "{report}");
        assert_eq!(report.results.len(), 8);
        assert!(report.results.iter().all(|r| r.entries > 0));
    }

    #[test]
    fn broken_tanh_gradient_fails() {
        let report = fault::with_broken_tanh_grad(|| gradcheck(0).unwrap());
        assert!(!report.passed(), "{report}");
    }

    #[test]
    fn zero_model_is_finite() {
        let report = gradcheck_with(|mode| {
            let (mut p, input, labels) = tiny_instance(mode, 1);
            p.fill_zero();
            (p, input, labels)
        })
        .unwrap();
        assert!(report.results.iter().all(|r| r.max_rel_error.is_finite()));
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn relative_error_guards_small_values() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
        assert!((relative_error(200.0, 198.0) - 0.01).abs() < 1e-15);
    }
}
