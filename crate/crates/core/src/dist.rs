//! Learnable probability distributions over fiber elements.
//!
//! Three parameterizations cover the groups in use:
//!
//! * [`UniformLieDistribution`] — uniform on `theta_max * [-1, 1)` in the
//!   Lie-algebra chart of SO(2), pushed to the group. Samples are
//!   reparameterized (`angle = theta_max * (2u - 1)`), so gradients reach
//!   `theta_max` through the kernel evaluation.
//! * [`DiscreteInclusionDistribution`] — an independent inclusion
//!   probability per non-identity element, sampled with Gumbel-sigmoid
//!   noise and a straight-through hard forward. The identity is always
//!   included, so at least one sample survives; with all probabilities at
//!   one the whole set is always included (full equivariance) and with all
//!   at zero only the identity remains (the equivariance is forgotten).
//! * [`ProductDistribution`] — independent factors per group axis,
//!   `p(g) = p(r) * p(m)` for O(2).
//!
//! Training draws one fresh sample set per layer per forward pass, shared
//! across the batch. Evaluation (and frozen full-equivariance layers) uses
//! a deterministic equispaced grid over the learned support; at
//! `theta_max = π` that grid is exactly the cyclic group C_n.

use crate::group::{FiberElement, GroupKind, GroupSpec};
use crate::rng::Rng;
use crate::tensor::{concat, Param, Tape, Tensor, TensorData};
use std::f32::consts::PI;
use thiserror::Error;

pub const THETA_MIN: f32 = 1e-3;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("sample_discrete: element list is empty")]
    EmptyElements,
    #[error("sample_discrete: elements[0] must be the identity, got (θ={0}, m={1})")]
    FirstNotIdentity(f32, f32),
    #[error("product distribution does not match group {0:?}")]
    FactorMismatch(GroupKind),
}

/// One sampled fiber coordinate set, with its on-tape angle tensor (for the
/// reparameterized gradient path) and optional straight-through weights.
pub struct SampleSet {
    /// Concrete coordinates, wrapped to canonical range.
    pub elements: Vec<FiberElement>,
    /// Shape `(n,)`, the unwrapped angles on the tape.
    pub angles: Tensor,
    /// Shape `(n,)` straight-through inclusion weights, when any discrete
    /// factor participates. Forward values are exactly 0 or 1.
    pub weights: Option<Tensor>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Uniform distribution over `[-theta_max, theta_max)` on the rotation axis.
pub struct UniformLieDistribution {
    pub theta_max: Param,
}

impl UniformLieDistribution {
    pub fn new(name: &str, init: f32) -> Self {
        UniformLieDistribution {
            theta_max: Param::new(
                format!("{name}.theta_max"),
                TensorData::new(vec![1], vec![init.clamp(THETA_MIN, PI)]),
            ),
        }
    }

    pub fn theta(&self) -> f32 {
        self.theta_max.value().data[0]
    }

    pub fn clamp(&self) {
        self.theta_max.update(|t| t[0] = t[0].clamp(THETA_MIN, PI));
    }
}

/// Independent inclusion probabilities for the non-identity elements of a
/// discrete set; `sigmoid(logits[i])` is the probability of `elements[i+1]`.
pub struct DiscreteInclusionDistribution {
    pub logits: Param,
    pub temperature: f32,
}

impl DiscreteInclusionDistribution {
    pub fn new(name: &str, n_non_identity: usize, init_logit: f32) -> Self {
        DiscreteInclusionDistribution {
            logits: Param::new(
                format!("{name}.logits"),
                TensorData::new(vec![n_non_identity], vec![init_logit; n_non_identity]),
            ),
            temperature: 1.0,
        }
    }

    pub fn probabilities(&self) -> Vec<f32> {
        self.logits
            .value()
            .data
            .iter()
            .map(|&l| 1.0 / (1.0 + (-l).exp()))
            .collect()
    }
}

/// Draws `n` reparameterized rotation samples: `exp_so2(theta_max * (2u - 1))`.
pub fn sample_continuous(
    dist: &UniformLieDistribution,
    n: usize,
    tape: &Tape,
    rng: &mut Rng,
) -> SampleSet {
    assert!(n >= 1, "sample_continuous: need at least one sample");
    let noise: Vec<f32> = (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    let noise_t = tape.constant_vec(vec![n], noise);
    let theta = tape.load(&dist.theta_max);
    let angles = theta.broadcast_to(vec![n]).mul(&noise_t);
    let elements = angles
        .data()
        .iter()
        .map(|&a| FiberElement::rotation(a))
        .collect();
    SampleSet {
        elements,
        angles,
        weights: None,
    }
}

/// Equispaced deterministic grid over the learned support: angles
/// `theta * (-1 + 2i/n)`. At `theta = π` this is exactly `C_n`.
pub fn grid_continuous(dist: &UniformLieDistribution, n: usize, tape: &Tape) -> SampleSet {
    assert!(n >= 1, "grid_continuous: need at least one sample");
    let theta = dist.theta();
    let angles_v: Vec<f32> = (0..n)
        .map(|i| theta * (-1.0 + 2.0 * i as f32 / n as f32))
        .collect();
    let elements = angles_v.iter().map(|&a| FiberElement::rotation(a)).collect();
    SampleSet {
        elements,
        angles: tape.constant_vec(vec![n], angles_v),
        weights: None,
    }
}

/// Gumbel-sigmoid inclusion sampling over a discrete element set.
///
/// Returns the included elements and the full per-element weight tensor
/// (identity first, always weight one). With `hard`, the forward weights
/// are exact 0/1 with the straight-through relaxed backward; without, the
/// relaxed weights are used directly.
pub fn sample_discrete(
    dist: &DiscreteInclusionDistribution,
    elements: &[FiberElement],
    tape: &Tape,
    rng: &mut Rng,
    hard: bool,
) -> Result<(Vec<FiberElement>, Tensor), DistError> {
    if elements.is_empty() {
        return Err(DistError::EmptyElements);
    }
    if !elements[0].is_identity(1e-6) {
        return Err(DistError::FirstNotIdentity(
            elements[0].theta,
            elements[0].mirror,
        ));
    }
    let n = elements.len() - 1;
    assert_eq!(
        n,
        dist.logits.value().numel(),
        "sample_discrete: {} logits for {} non-identity elements",
        dist.logits.value().numel(),
        n
    );
    let one = tape.constant_vec(vec![1], vec![1.0]);
    if n == 0 {
        return Ok((vec![elements[0]], one));
    }
    // logistic noise = difference of two Gumbels
    let noise: Vec<f32> = (0..n).map(|_| rng.gumbel() - rng.gumbel()).collect();
    let noise_t = tape.constant_vec(vec![n], noise);
    let logits = tape.load(&dist.logits);
    let soft = logits
        .add(&noise_t)
        .mul_scalar(1.0 / dist.temperature)
        .sigmoid();
    let weights = if hard {
        let soft_v = soft.data();
        let hard_minus_soft: Vec<f32> = soft_v
            .iter()
            .map(|&s| if s > 0.5 { 1.0 - s } else { -s })
            .collect();
        let shift = tape.constant_vec(vec![n], hard_minus_soft);
        soft.add(&shift)
    } else {
        soft
    };
    let full = concat(&[one, weights], 0);
    let included = full
        .data()
        .iter()
        .zip(elements)
        .filter(|(&w, _)| w > 0.5)
        .map(|(_, &e)| e)
        .collect();
    Ok((included, full))
}

/// Deterministic counterpart of [`sample_discrete`]: element `i` is included
/// exactly when its probability is at least 1/2.
pub fn grid_discrete(
    dist: &DiscreteInclusionDistribution,
    elements: &[FiberElement],
    tape: &Tape,
) -> Result<(Vec<FiberElement>, Tensor), DistError> {
    if elements.is_empty() {
        return Err(DistError::EmptyElements);
    }
    let probs = dist.probabilities();
    let mut w = vec![1.0];
    w.extend(probs.iter().map(|&p| if p >= 0.5 { 1.0 } else { 0.0 }));
    let weights = tape.constant_vec(vec![elements.len()], w.clone());
    let included = w
        .iter()
        .zip(elements)
        .filter(|(&wi, _)| wi > 0.5)
        .map(|(_, &e)| e)
        .collect();
    Ok((included, weights))
}

/// Independent factors along each group axis.
pub struct ProductDistribution {
    pub rotation: UniformLieDistribution,
    pub mirror: DiscreteInclusionDistribution,
}

impl ProductDistribution {
    pub fn new(name: &str, theta_init: f32, mirror_logit_init: f32) -> Self {
        ProductDistribution {
            rotation: UniformLieDistribution::new(&format!("{name}.rotation"), theta_init),
            mirror: DiscreteInclusionDistribution::new(
                &format!("{name}.mirror"),
                1,
                mirror_logit_init,
            ),
        }
    }
}

/// Joint samples over O(2): `n_rot` rotation draws composed with each mirror
/// element. The mirrored half carries the mirror factor's straight-through
/// weight; with the factor collapsed the samples are pure rotations.
pub fn sample_product(
    dist: &ProductDistribution,
    n_rot: usize,
    tape: &Tape,
    rng: &mut Rng,
) -> Result<SampleSet, DistError> {
    let rot = sample_continuous(&dist.rotation, n_rot, tape, rng);
    let mirror_elems = [FiberElement::identity(), FiberElement::new(0.0, -1.0)];
    let (_, mw) = sample_discrete(&dist.mirror, &mirror_elems, tape, rng, true)?;
    Ok(product_set(rot, mw, tape, n_rot))
}

pub fn grid_product(
    dist: &ProductDistribution,
    n_rot: usize,
    tape: &Tape,
) -> Result<SampleSet, DistError> {
    let rot = grid_continuous(&dist.rotation, n_rot, tape);
    let mirror_elems = [FiberElement::identity(), FiberElement::new(0.0, -1.0)];
    let (_, mw) = grid_discrete(&dist.mirror, &mirror_elems, tape)?;
    Ok(product_set(rot, mw, tape, n_rot))
}

fn product_set(rot: SampleSet, mirror_weights: Tensor, tape: &Tape, n_rot: usize) -> SampleSet {
    let mut elements = rot.elements.clone();
    elements.extend(rot.elements.iter().map(|e| FiberElement::new(e.theta, -1.0)));
    let angles = concat(&[rot.angles.clone(), rot.angles], 0);
    let ones = tape.constant_vec(vec![n_rot], vec![1.0; n_rot]);
    let mirrored_w = mirror_weights
        .index_select(0, &[1])
        .broadcast_to(vec![n_rot]);
    let weights = concat(&[ones, mirrored_w], 0);
    SampleSet {
        elements,
        angles,
        weights: Some(weights),
    }
}

/// A layer's learnable (or frozen) distribution over its output fiber.
pub enum SubsetDistribution {
    /// Trivial group: the identity coordinate only.
    Identity,
    /// SO(2): uniform over a learnable symmetric range.
    Continuous(UniformLieDistribution),
    /// Discrete group given by an element list (identity first).
    Discrete {
        dist: DiscreteInclusionDistribution,
        elements: Vec<FiberElement>,
    },
    /// O(2): rotation range x mirror inclusion.
    Product(ProductDistribution),
}

impl SubsetDistribution {
    /// Fully-equivariant initialization for the given group.
    pub fn full_support(name: &str, spec: GroupSpec) -> Self {
        match spec.kind {
            GroupKind::Trivial => SubsetDistribution::Identity,
            GroupKind::SO2 => SubsetDistribution::Continuous(UniformLieDistribution::new(name, PI)),
            GroupKind::Mirror => SubsetDistribution::Discrete {
                dist: DiscreteInclusionDistribution::new(name, 1, 3.0),
                elements: vec![FiberElement::identity(), FiberElement::new(0.0, -1.0)],
            },
            GroupKind::O2 => SubsetDistribution::Product(ProductDistribution::new(name, PI, 3.0)),
        }
    }

    pub fn params(&self) -> Vec<Param> {
        match self {
            SubsetDistribution::Identity => vec![],
            SubsetDistribution::Continuous(d) => vec![d.theta_max.clone()],
            SubsetDistribution::Discrete { dist, .. } => vec![dist.logits.clone()],
            SubsetDistribution::Product(p) => {
                vec![p.rotation.theta_max.clone(), p.mirror.logits.clone()]
            }
        }
    }

    /// Clamps continuous supports to `[THETA_MIN, π]` (after optimizer steps).
    pub fn clamp(&self) {
        match self {
            SubsetDistribution::Continuous(d) => d.clamp(),
            SubsetDistribution::Product(p) => p.rotation.clamp(),
            _ => {}
        }
    }

    /// Number of fiber coordinates a layer will carry for a budget of
    /// `n_max`: the continuous axis contributes `max(1, round(n_max * θ/π))`
    /// of its per-axis budget; discrete axes keep their full enumeration
    /// (excluded elements ride along with zero weight).
    pub fn effective_count(&self, n_max: usize) -> usize {
        assert!(n_max >= 1, "effective_count: budget must be at least 1");
        match self {
            SubsetDistribution::Identity => 1,
            SubsetDistribution::Continuous(d) => continuous_count(d.theta(), n_max),
            SubsetDistribution::Discrete { elements, .. } => elements.len(),
            SubsetDistribution::Product(p) => {
                let rot_budget = (n_max / 2).max(1);
                continuous_count(p.rotation.theta(), rot_budget) * 2
            }
        }
    }

    /// Stochastic training draw. `n_max` is the full-support budget; the
    /// actual count shrinks with the learned support.
    pub fn sample(&self, n_max: usize, tape: &Tape, rng: &mut Rng) -> SampleSet {
        match self {
            SubsetDistribution::Identity => identity_set(tape),
            SubsetDistribution::Continuous(d) => {
                sample_continuous(d, continuous_count(d.theta(), n_max), tape, rng)
            }
            SubsetDistribution::Discrete { dist, elements } => {
                let (_, weights) = sample_discrete(dist, elements, tape, rng, true)
                    .expect("discrete distribution invariant violated");
                SampleSet {
                    elements: elements.clone(),
                    angles: tape.constant_vec(
                        vec![elements.len()],
                        elements.iter().map(|e| e.theta).collect(),
                    ),
                    weights: Some(weights),
                }
            }
            SubsetDistribution::Product(p) => {
                let rot_budget = (n_max / 2).max(1);
                let n_rot = continuous_count(p.rotation.theta(), rot_budget);
                sample_product(p, n_rot, tape, rng).expect("product distribution invariant violated")
            }
        }
    }

    /// Deterministic grid over the learned support (evaluation, and frozen
    /// fully-equivariant layers during training).
    pub fn grid(&self, n_max: usize, tape: &Tape) -> SampleSet {
        match self {
            SubsetDistribution::Identity => identity_set(tape),
            SubsetDistribution::Continuous(d) => {
                grid_continuous(d, continuous_count(d.theta(), n_max), tape)
            }
            SubsetDistribution::Discrete { dist, elements } => {
                let (_, weights) = grid_discrete(dist, elements, tape)
                    .expect("discrete distribution invariant violated");
                SampleSet {
                    elements: elements.clone(),
                    angles: tape.constant_vec(
                        vec![elements.len()],
                        elements.iter().map(|e| e.theta).collect(),
                    ),
                    weights: Some(weights),
                }
            }
            SubsetDistribution::Product(p) => {
                let rot_budget = (n_max / 2).max(1);
                let n_rot = continuous_count(p.rotation.theta(), rot_budget);
                grid_product(p, n_rot, tape).expect("product distribution invariant violated")
            }
        }
    }

    /// Human-readable summary of the learned support.
    pub fn report(&self) -> String {
        match self {
            SubsetDistribution::Identity => "identity only".to_string(),
            SubsetDistribution::Continuous(d) => report_range(d.theta()),
            SubsetDistribution::Discrete { dist, .. } => report_elements(&dist.probabilities()),
            SubsetDistribution::Product(p) => format!(
                "rotation {}; mirror {}",
                report_range(p.rotation.theta()),
                report_elements(&p.mirror.probabilities())
            ),
        }
    }

    /// `(name, value)` rows for distribution-trajectory logging.
    pub fn summary_values(&self) -> Vec<(String, f32)> {
        match self {
            SubsetDistribution::Identity => vec![],
            SubsetDistribution::Continuous(d) => vec![("theta_max".into(), d.theta())],
            SubsetDistribution::Discrete { dist, .. } => dist
                .probabilities()
                .iter()
                .enumerate()
                .map(|(i, &p)| (format!("p{}", i + 1), p))
                .collect(),
            SubsetDistribution::Product(p) => {
                let mut rows = vec![("theta_max".into(), p.rotation.theta())];
                for (i, &pr) in p.mirror.probabilities().iter().enumerate() {
                    rows.push((format!("mirror_p{}", i + 1), pr));
                }
                rows
            }
        }
    }
}

fn continuous_count(theta: f32, n_max: usize) -> usize {
    ((n_max as f32 * theta / PI).round() as usize).clamp(1, n_max)
}

fn identity_set(tape: &Tape) -> SampleSet {
    SampleSet {
        elements: vec![FiberElement::identity()],
        angles: tape.constant_vec(vec![1], vec![0.0]),
        weights: None,
    }
}

fn report_range(theta: f32) -> String {
    let t = theta / PI;
    let full = if t > 0.995 { " (full)" } else { "" };
    format!("range [-{t:.2}π, {t:.2}π]{full}")
}

fn report_elements(probs: &[f32]) -> String {
    let mut s = String::from("elements: e:1.00");
    for (i, &p) in probs.iter().enumerate() {
        s.push_str(&format!(", g{}:{:.2}", i + 1, p));
    }
    s
}

/// `max(1, round(n_max * θ/π))`, scaled per axis for products: the sample
/// budget a partial layer actually uses.
pub fn effective_sample_count(dist: &SubsetDistribution, n_max: usize) -> usize {
    dist.effective_count(n_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_support_and_mean() {
        let dist = UniformLieDistribution::new("d", PI / 2.0);
        let tape = Tape::new();
        let mut rng = Rng::from_seed(5);
        let set = sample_continuous(&dist, 100_000, &tape, &mut rng);
        let mut mean = 0.0f64;
        for e in &set.elements {
            assert!(
                e.theta >= -PI / 2.0 && e.theta < PI / 2.0,
                "sample escaped support"
            );
            mean += e.theta as f64;
        }
        mean /= set.elements.len() as f64;
        assert!(mean.abs() < 0.02, "empirical mean {mean}");
    }

    #[test]
    fn collapse_regime_yields_identity_like_samples() {
        let dist = UniformLieDistribution::new("d", 1e-9);
        assert!(
            (dist.theta() - THETA_MIN).abs() < 1e-9,
            "clamped at construction"
        );
        let tape = Tape::new();
        let mut rng = Rng::from_seed(1);
        let set = sample_continuous(&dist, 64, &tape, &mut rng);
        for e in &set.elements {
            assert!(e.theta.abs() <= THETA_MIN);
        }
    }

    #[test]
    fn reparameterized_gradient_is_scaled_noise() {
        let dist = UniformLieDistribution::new("d", 1.0);
        let tape = Tape::new();
        let mut rng = Rng::from_seed(9);
        let set = sample_continuous(&dist, 8, &tape, &mut rng);
        let loss = set.angles.sum();
        tape.backward(&loss);
        // d(sum of θ(2u-1))/dθ = Σ(2u-1); recover the noise from the angles
        let expected: f32 = set.elements.iter().map(|e| e.theta / 1.0).sum();
        let got = dist.theta_max.grad().data[0];
        assert!((got - expected).abs() < 1e-4, "grad {got} vs {expected}");
    }

    #[test]
    fn discrete_extremes() {
        let tape = Tape::new();
        let mut rng = Rng::from_seed(2);
        let elems = vec![
            FiberElement::identity(),
            FiberElement::rotation(1.0),
            FiberElement::rotation(2.0),
        ];
        let all_in = DiscreteInclusionDistribution::new("hi", 2, 20.0);
        for _ in 0..50 {
            let (inc, w) = sample_discrete(&all_in, &elems, &tape, &mut rng, true).unwrap();
            assert_eq!(inc.len(), 3);
            assert_eq!(w.data(), vec![1.0, 1.0, 1.0]);
        }
        let none_in = DiscreteInclusionDistribution::new("lo", 2, -20.0);
        for _ in 0..50 {
            let (inc, w) = sample_discrete(&none_in, &elems, &tape, &mut rng, true).unwrap();
            assert_eq!(inc.len(), 1);
            assert!(inc[0].is_identity(0.0));
            assert_eq!(w.data(), vec![1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn discrete_inclusion_frequency_matches_probability() {
        let tape = Tape::new();
        let mut rng = Rng::from_seed(3);
        let elems = vec![FiberElement::identity(), FiberElement::rotation(1.0)];
        let dist = DiscreteInclusionDistribution::new("p", 1, 0.0); // p = 0.5
        let mut count = 0;
        let n = 10_000;
        for _ in 0..n {
            let (inc, _) = sample_discrete(&dist, &elems, &tape, &mut rng, true).unwrap();
            if inc.len() == 2 {
                count += 1;
            }
        }
        let freq = count as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "inclusion frequency {freq}");
    }

    #[test]
    fn straight_through_contract() {
        let tape = Tape::new();
        let mut rng = Rng::from_seed(4);
        let elems = vec![FiberElement::identity(), FiberElement::rotation(1.0)];
        let dist = DiscreteInclusionDistribution::new("st", 1, 0.3);
        let (_, w) = sample_discrete(&dist, &elems, &tape, &mut rng, true).unwrap();
        let v = w.data();
        assert!(v.iter().all(|&x| x == 0.0 || x == 1.0), "forward weights {v:?}");
        let loss = w.sum();
        tape.backward(&loss);
        let g = dist.logits.grad().data[0];
        assert!(g != 0.0, "straight-through gradient must be nonzero");
        assert!(g > 0.0 && g < 0.25 + 1e-3, "sigmoid-derivative range, got {g}");
    }

    #[test]
    fn discrete_errors() {
        let tape = Tape::new();
        let mut rng = Rng::from_seed(6);
        let dist = DiscreteInclusionDistribution::new("e", 1, 0.0);
        assert!(matches!(
            sample_discrete(&dist, &[], &tape, &mut rng, true),
            Err(DistError::EmptyElements)
        ));
        let bad = vec![FiberElement::rotation(1.0), FiberElement::identity()];
        assert!(matches!(
            sample_discrete(&dist, &bad, &tape, &mut rng, true),
            Err(DistError::FirstNotIdentity(..))
        ));
    }

    #[test]
    fn product_full_group_and_collapsed_mirror() {
        let tape = Tape::new();
        let mut rng = Rng::from_seed(7);
        let full = ProductDistribution::new("full", PI, 20.0);
        let set = sample_product(&full, 8, &tape, &mut rng).unwrap();
        assert_eq!(set.len(), 16);
        let w = set.weights.as_ref().unwrap().data();
        assert!(w.iter().all(|&x| x == 1.0));
        assert!(set.elements[..8].iter().all(|e| e.mirror == 1.0));
        assert!(set.elements[8..].iter().all(|e| e.mirror == -1.0));

        let rot_only = ProductDistribution::new("rot", PI, -20.0);
        let set = sample_product(&rot_only, 8, &tape, &mut rng).unwrap();
        let w = set.weights.as_ref().unwrap().data();
        assert!(w[..8].iter().all(|&x| x == 1.0));
        assert!(w[8..].iter().all(|&x| x == 0.0), "mirrored half zero-weighted");
    }

    #[test]
    fn product_mirror_marginal_is_half() {
        let tape = Tape::new();
        let mut rng = Rng::from_seed(8);
        let dist = ProductDistribution::new("m", PI / 2.0, 0.0);
        let mut mirrored = 0;
        let n = 10_000;
        for _ in 0..n {
            let set = sample_product(&dist, 2, &tape, &mut rng).unwrap();
            let w = set.weights.as_ref().unwrap().data();
            if w[2] == 1.0 {
                mirrored += 1;
            }
            for e in &set.elements {
                assert!(e.theta.abs() <= PI / 2.0);
            }
        }
        let freq = mirrored as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "mirror marginal {freq}");
    }

    #[test]
    fn report_strings() {
        let full = SubsetDistribution::Continuous(UniformLieDistribution::new("a", PI));
        assert_eq!(full.report(), "range [-1.00π, 1.00π] (full)");
        let quarter = SubsetDistribution::Continuous(UniformLieDistribution::new("b", 0.25 * PI));
        assert_eq!(quarter.report(), "range [-0.25π, 0.25π]");
        let disc = SubsetDistribution::Discrete {
            dist: DiscreteInclusionDistribution::new("c", 2, 0.0),
            elements: vec![
                FiberElement::identity(),
                FiberElement::rotation(1.0),
                FiberElement::rotation(2.0),
            ],
        };
        // p = (1.0, 0.0) after forcing the logits
        disc.params()[0].update(|l| {
            l[0] = 40.0;
            l[1] = -40.0;
        });
        assert_eq!(disc.report(), "elements: e:1.00, g1:1.00, g2:0.00");
    }

    #[test]
    fn effective_counts() {
        let full = SubsetDistribution::Continuous(UniformLieDistribution::new("a", PI));
        assert_eq!(full.effective_count(16), 16);
        let half = SubsetDistribution::Continuous(UniformLieDistribution::new("b", PI / 2.0));
        assert_eq!(half.effective_count(16), 8);
        let tiny = SubsetDistribution::Continuous(UniformLieDistribution::new("c", 0.01));
        assert_eq!(tiny.effective_count(16), 1);
    }

    #[test]
    fn clamp_invariant_after_fake_steps() {
        let dist = SubsetDistribution::Continuous(UniformLieDistribution::new("a", PI));
        let p = &dist.params()[0];
        p.update(|t| t[0] = 7.5);
        dist.clamp();
        assert_eq!(p.value().data[0], PI);
        p.update(|t| t[0] = -0.2);
        dist.clamp();
        assert_eq!(p.value().data[0], THETA_MIN);
    }

    #[test]
    fn grid_at_full_support_is_cyclic_group() {
        let dist = UniformLieDistribution::new("a", PI);
        let tape = Tape::new();
        let set = grid_continuous(&dist, 4, &tape);
        let want = [-PI, -PI / 2.0, 0.0, PI / 2.0];
        for (e, w) in set.elements.iter().zip(want) {
            assert!((e.theta - w).abs() < 1e-6, "{} vs {}", e.theta, w);
        }
    }

    #[test]
    fn support_never_escapes_over_many_draws() {
        let dist = UniformLieDistribution::new("d", 2.0);
        let tape = Tape::new();
        let mut rng = Rng::from_seed(11);
        // one million draws, batched
        for _ in 0..100 {
            let set = sample_continuous(&dist, 10_000, &tape, &mut rng);
            for e in &set.elements {
                assert!(e.theta >= -2.0 && e.theta < 2.0);
            }
        }
    }
}
