//! Equivariance diagnostics: empirical equivariance error, the analytic
//! boundary-integral error formulas evaluated by dense quadrature, and the
//! Monte Carlo equivariance-in-expectation test.
//!
//! All quadrature runs in f64 on equispaced grids with trapezoidal weights;
//! periodicity is handled by index wrap. The network side stays in f32 —
//! the oracles need the headroom, the layers do not.
//!
//! Conventions. The rotation `w` acts on signals by `L_w f(u) = f(w^{-1}u)`
//! and on a subset by `wS = {w·s}`. The output-subset error is evaluated in
//! its set-difference form `‖∫_S φ - ∫_{wS} φ‖²`, which stays valid when
//! the translated subset overlaps or wraps; the two-boundary-strip form is
//! its small-`w` specialization and is kept as a cross-check. The empirical
//! error integrates the partial op's response over the subset for the
//! plain and the transformed input; by the change of variables it equals
//! the analytic error at `w^{-1}` (and at `w` for even signals on
//! symmetric subsets).

use crate::dist::SampleSet;
use crate::group::{compose, inverse, FiberElement};
use crate::layers::{GroupConv, LiftedFeatureMap, Network, Sampling};
use crate::rng::Rng;
use crate::tensor::{Tape, TensorData};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("derivation assumes a one-dimensional rotation chart; mirror elements unsupported")]
    MirrorElement,
    #[error("subset must satisfy -π ≤ min < max ≤ π, got [{0}, {1}]")]
    BadSubset(f64, f64),
    #[error("expectation test needs at least 2 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("signal needs at least {need} grid points, got {got}")]
    GridTooCoarse { need: usize, got: usize },
}

/// A subset of SO(2) in the angle chart.
#[derive(Debug, Clone, Copy)]
pub struct SubsetSpec {
    pub s_min: f64,
    pub s_max: f64,
}

impl SubsetSpec {
    pub fn new(s_min: f64, s_max: f64) -> Result<Self, AnalysisError> {
        if !(-PI..=PI).contains(&s_min) || !(-PI..=PI).contains(&s_max) || s_min >= s_max {
            return Err(AnalysisError::BadSubset(s_min, s_max));
        }
        Ok(SubsetSpec { s_min, s_max })
    }

    pub fn full() -> Self {
        SubsetSpec {
            s_min: -PI,
            s_max: PI,
        }
    }

    pub fn is_full(&self) -> bool {
        (self.s_max - self.s_min - 2.0 * PI).abs() < 1e-12
    }

    pub fn width(&self) -> f64 {
        self.s_max - self.s_min
    }
}

/// Dense samples of a (vector-valued) function on SO(2): `n_grid`
/// equispaced angles over `[-π, π)`, `channels` values per angle.
#[derive(Clone)]
pub struct FiberSignal {
    pub n_grid: usize,
    pub channels: usize,
    /// Row-major `(angle, channel)`.
    pub values: Vec<f64>,
}

impl FiberSignal {
    pub fn from_fn(n_grid: usize, channels: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_grid * channels);
        for i in 0..n_grid {
            let angle = -PI + 2.0 * PI * i as f64 / n_grid as f64;
            for c in 0..channels {
                values.push(f(angle, c));
            }
        }
        FiberSignal {
            n_grid,
            channels,
            values,
        }
    }

    pub fn angle(&self, i: usize) -> f64 {
        -PI + 2.0 * PI * i as f64 / self.n_grid as f64
    }

    fn step(&self) -> f64 {
        2.0 * PI / self.n_grid as f64
    }

    /// Periodic linear interpolation at an arbitrary angle.
    pub fn sample(&self, angle: f64, channel: usize) -> f64 {
        let pos = (angle + PI).rem_euclid(2.0 * PI) / self.step();
        let i0 = pos.floor() as usize % self.n_grid;
        let i1 = (i0 + 1) % self.n_grid;
        let frac = pos - pos.floor();
        let a = self.values[i0 * self.channels + channel];
        let b = self.values[i1 * self.channels + channel];
        a + frac * (b - a)
    }

    /// Trapezoidal integral of one channel over `[a, b]` (b ≥ a, length at
    /// most 2π), periodic extension, endpoint cells interpolated.
    pub fn integrate(&self, a: f64, b: f64, channel: usize) -> f64 {
        assert!(b >= a, "integrate: reversed interval [{a}, {b}]");
        assert!(b - a <= 2.0 * PI + 1e-12, "integrate: interval longer than the circle");
        if b - a < 1e-15 {
            return 0.0;
        }
        let h = self.step();
        // first grid point strictly inside (a, b]
        let start = (a / h).ceil();
        let start = if start * h <= a + 1e-15 { start + 1.0 } else { start };
        let mut nodes = vec![a];
        let mut k = start;
        while k * h < b - 1e-15 {
            nodes.push(k * h);
            k += 1.0;
        }
        nodes.push(b);
        let mut total = 0.0;
        for pair in nodes.windows(2) {
            let (x0, x1) = (pair[0], pair[1]);
            let f0 = self.sample(x0, channel);
            let f1 = self.sample(x1, channel);
            total += 0.5 * (f0 + f1) * (x1 - x0);
        }
        total
    }

    /// Per-channel integral over a subset.
    pub fn integrate_subset(&self, subset: &SubsetSpec) -> Vec<f64> {
        (0..self.channels)
            .map(|c| self.integrate(subset.s_min, subset.s_max, c))
            .collect()
    }
}

/// Dense circular convolution `(ψ * f)(u) = ∫ ψ(u - v) f(v) dv` on the
/// signal's own grid; `ψ` must be single-channel.
pub fn circular_conv(psi: &FiberSignal, f: &FiberSignal) -> FiberSignal {
    assert_eq!(psi.channels, 1, "circular_conv: kernel must be single-channel");
    assert_eq!(psi.n_grid, f.n_grid, "circular_conv: grid mismatch");
    let n = f.n_grid;
    let dv = f.step();
    let mut values = vec![0.0; n * f.channels];
    for i in 0..n {
        for j in 0..n {
            let k = (i + n - j) % n; // index of angle (u_i - v_j)
            let w = psi.values[k];
            for c in 0..f.channels {
                values[i * f.channels + c] += w * f.values[j * f.channels + c] * dv;
            }
        }
    }
    FiberSignal {
        n_grid: n,
        channels: f.channels,
        values,
    }
}

fn require_rotation(w: FiberElement) -> Result<f64, AnalysisError> {
    if w.mirror != 1.0 {
        return Err(AnalysisError::MirrorElement);
    }
    Ok(w.theta as f64)
}

/// Output-subset equivariance error: `‖∫_S φ - ∫_{wS} φ‖²` with
/// `wS = S + θ_w`, evaluated by trapezoidal quadrature. Exactly zero at the
/// identity and, by periodicity, whenever `S` is the full circle.
pub fn analytic_eps_out(
    phi: &FiberSignal,
    subset: &SubsetSpec,
    w: FiberElement,
) -> Result<f64, AnalysisError> {
    let theta = require_rotation(w)?;
    if phi.n_grid < 512 {
        return Err(AnalysisError::GridTooCoarse {
            need: 512,
            got: phi.n_grid,
        });
    }
    let mut err = 0.0;
    for c in 0..phi.channels {
        let i_s = phi.integrate(subset.s_min, subset.s_max, c);
        let i_ws = phi.integrate(subset.s_min + theta, subset.s_max + theta, c);
        let d = i_s - i_ws;
        err += d * d;
    }
    Ok(err)
}

/// The boundary-strip form of the output error,
/// `‖∫_{w·s_max}^{s_max} φ - ∫_{w·s_min}^{s_min} φ‖²`: equal to
/// [`analytic_eps_out`] while the strips stay disjoint (small `w`).
pub fn analytic_eps_out_strips(
    phi: &FiberSignal,
    subset: &SubsetSpec,
    w: FiberElement,
) -> Result<f64, AnalysisError> {
    let theta = require_rotation(w)?;
    let mut err = 0.0;
    for c in 0..phi.channels {
        // signed strips: ∫ from w·s to s is negative when θ_w > 0
        let top = -phi.integrate(subset.s_max.min(subset.s_max + theta), subset.s_max.max(subset.s_max + theta), c)
            * theta.signum();
        let bottom = -phi.integrate(subset.s_min.min(subset.s_min + theta), subset.s_min.max(subset.s_min + theta), c)
            * theta.signum();
        let d = top - bottom;
        err += d * d;
    }
    Ok(err)
}

/// Input-subset equivariance error:
/// `‖∫_G ∫_S ψ(v^{-1}u) (f(v) - f(w^{-1}v)) dμ(v) dμ(u)‖²` by double
/// trapezoidal quadrature.
pub fn analytic_eps_in(
    psi: &FiberSignal,
    f: &FiberSignal,
    subset_in: &SubsetSpec,
    w: FiberElement,
) -> Result<f64, AnalysisError> {
    let theta = require_rotation(w)?;
    assert_eq!(psi.channels, 1, "analytic_eps_in: kernel must be single-channel");
    if psi.n_grid < 512 || f.n_grid < 512 {
        return Err(AnalysisError::GridTooCoarse {
            need: 512,
            got: psi.n_grid.min(f.n_grid),
        });
    }
    let n_outer = psi.n_grid;
    let du = 2.0 * PI / n_outer as f64;
    // inner quadrature nodes over the subset, matching the signal's density
    let n_inner = ((subset_in.width() / (2.0 * PI)) * f.n_grid as f64).ceil() as usize + 1;
    let dv = subset_in.width() / (n_inner - 1).max(1) as f64;
    let mut acc = vec![0.0f64; f.channels];
    for iu in 0..n_outer {
        let u = -PI + du * iu as f64;
        for iv in 0..n_inner {
            let v = subset_in.s_min + dv * iv as f64;
            let trap = if iv == 0 || iv + 1 == n_inner { 0.5 } else { 1.0 };
            let k = psi.sample(u - v, 0);
            for c in 0..f.channels {
                let diff = f.sample(v, c) - f.sample(v - theta, c);
                acc[c] += k * diff * trap * dv * du;
            }
        }
    }
    Ok(acc.iter().map(|x| x * x).sum())
}

/// Empirical output-subset error of the dense partial fiber convolution:
/// the op's response to the plain and the transformed input, integrated
/// over a deterministic `n_coords`-point grid covering the subset, then
/// normed. Converges to [`analytic_eps_out`] at `w^{-1}` as grids refine.
pub fn empirical_equiv_error_fiber(
    psi: &FiberSignal,
    f: &FiberSignal,
    subset: &SubsetSpec,
    w: FiberElement,
    n_coords: usize,
) -> Result<f64, AnalysisError> {
    let theta = require_rotation(w)?;
    assert_eq!(psi.channels, 1, "empirical error: kernel must be single-channel");
    let n_in = f.n_grid;
    let dv = f.step();
    let du = subset.width() / (n_coords - 1).max(1) as f64;
    let mut t_plain = vec![0.0f64; f.channels];
    let mut t_moved = vec![0.0f64; f.channels];
    for i in 0..n_coords {
        let u = subset.s_min + du * i as f64;
        let trap = if i == 0 || i + 1 == n_coords { 0.5 } else { 1.0 };
        for j in 0..n_in {
            let v = f.angle(j);
            let k = psi.sample(u - v, 0) * dv;
            for c in 0..f.channels {
                t_plain[c] += k * f.values[j * f.channels + c] * trap * du;
                t_moved[c] += k * f.sample(v - theta, c) * trap * du;
            }
        }
    }
    Ok(t_plain
        .iter()
        .zip(&t_moved)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Result of the equivariance-in-expectation test.
#[derive(Debug)]
pub struct ExpectationReport {
    /// Largest elementwise deviation in units of its standard error.
    pub max_sigma: f64,
    /// Mean absolute deviation across elements.
    pub mean_abs: f64,
    pub pass: bool,
}

/// Monte Carlo equivariance in expectation for a group convolution.
///
/// Per resample, input coordinates are drawn once and reused for both
/// sides (common random numbers): side A evaluates the plain signal onto
/// output coordinates `w^{-1}U`, side B evaluates the transformed signal
/// `L_w f` onto `U`. With input coordinates drawn uniformly from the whole
/// group the two means agree elementwise; drawing them from a truncated
/// support breaks the change of variables and the test fails.
#[allow(clippy::too_many_arguments)]
pub fn expectation_equivariance_test(
    conv: &GroupConv,
    f_fn: &dyn Fn(f32) -> Vec<f32>,
    plane: (usize, usize),
    out_coords: &[FiberElement],
    w: FiberElement,
    m: usize,
    n_in: usize,
    input_support: Option<(f32, f32)>,
    rng: &mut Rng,
) -> Result<ExpectationReport, AnalysisError> {
    if m < 2 {
        return Err(AnalysisError::TooFewResamples(m));
    }
    if w.mirror != 1.0 {
        return Err(AnalysisError::MirrorElement);
    }
    let (h, wd) = plane;
    let n_out = out_coords.len();
    let elems = n_out * h * wd;
    // paired design: track the per-resample difference directly
    let mut sum_d = vec![0.0f64; elems];
    let mut sq_d = vec![0.0f64; elems];

    let coords_a: Vec<FiberElement> = out_coords
        .iter()
        .map(|&u| compose(inverse(w), u))
        .collect();

    for _ in 0..m {
        let (lo, hi) = input_support.unwrap_or((-std::f32::consts::PI, std::f32::consts::PI));
        let vs: Vec<FiberElement> = (0..n_in)
            .map(|_| FiberElement::rotation(rng.uniform_in(lo, hi)))
            .collect();
        let run = |outs: &[FiberElement], transform_input: bool| -> Vec<f32> {
            let tape = Tape::new();
            let mut values = Vec::with_capacity(n_in * h * wd);
            for v in &vs {
                let arg = if transform_input {
                    compose(inverse(w), *v).theta
                } else {
                    v.theta
                };
                values.extend(f_fn(arg));
            }
            let input = LiftedFeatureMap {
                values: tape
                    .constant_vec(vec![1, 1, n_in, h, wd], values)
                    .reshape(vec![1, 1, n_in, h, wd]),
                coords: vs.clone(),
                angles: tape.constant_vec(vec![n_in], vs.iter().map(|e| e.theta).collect()),
            };
            let set = SampleSet {
                elements: outs.to_vec(),
                angles: tape.constant_vec(vec![outs.len()], outs.iter().map(|e| e.theta).collect()),
                weights: None,
            };
            conv.forward(&tape, &input, &set).values.data()
        };
        let a = run(&coords_a, false);
        let b = run(out_coords, true);
        for i in 0..elems {
            let d = a[i] as f64 - b[i] as f64;
            sum_d[i] += d;
            sq_d[i] += d * d;
        }
    }

    let mf = m as f64;
    let mut max_sigma = 0.0f64;
    let mut mean_abs = 0.0f64;
    for i in 0..elems {
        let md = sum_d[i] / mf;
        let vd = (sq_d[i] / mf - md * md).max(0.0);
        let se = (vd / mf).sqrt().max(1e-12);
        let dev = md.abs();
        max_sigma = max_sigma.max(dev / se);
        mean_abs += dev / elems as f64;
    }
    Ok(ExpectationReport {
        max_sigma,
        mean_abs,
        pass: max_sigma <= 3.0,
    })
}

/// Invariance error of a network's logits under a grid-exact or bilinear
/// input rotation: mean squared difference, averaged over the batch.
pub fn logit_invariance_error(net: &Network, images: &TensorData, w: FiberElement) -> f64 {
    use crate::data::{exact_transform_image, rotate_bilinear};
    let (b, h, wd) = (images.shape[0], images.shape[2], images.shape[3]);
    let quarter = (w.theta / std::f32::consts::FRAC_PI_2).round();
    let grid_exact =
        (w.theta - quarter * std::f32::consts::FRAC_PI_2).abs() < 1e-6 && h == wd;
    let mut transformed = Vec::with_capacity(images.data.len());
    for i in 0..b {
        let img = &images.data[i * h * wd..(i + 1) * h * wd];
        if grid_exact {
            transformed.extend(exact_transform_image(w, img, h, wd));
        } else {
            assert!(
                w.mirror == 1.0,
                "bilinear transform path supports rotations only"
            );
            transformed.extend(rotate_bilinear(img, h, wd, w.theta));
        }
    }
    let run = |data: Vec<f32>| -> Vec<f32> {
        let tape = Tape::new();
        let input = tape.constant_vec(images.shape.clone(), data);
        net.forward(&tape, &input, false, &mut Sampling::Grid).data()
    };
    let base = run(images.data.clone());
    let moved = run(transformed);
    let mut err = 0.0;
    for (x, y) in base.iter().zip(&moved) {
        err += ((x - y) as f64).powi(2);
    }
    err / base.len() as f64
}

/// Maps [`logit_invariance_error`] over a list of rotations.
pub fn equivariance_curve(
    net: &Network,
    images: &TensorData,
    w_list: &[FiberElement],
) -> Vec<(f32, f64)> {
    w_list
        .iter()
        .map(|&w| (w.theta, logit_invariance_error(net, images, w)))
        .collect()
}

/// CSV rows `w,error` with a header, for curve plotting.
pub fn curve_to_csv(rows: &[(f32, f64)]) -> String {
    let mut out = String::from("w,error\n");
    for (w, e) in rows {
        out.push_str(&format!("{w},{e}\n"));
    }
    out
}
