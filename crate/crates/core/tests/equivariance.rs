//! Equivariance oracles for the convolution layers: exact C4/mirror
//! permutation identities, Monte Carlo equivariance in expectation, and the
//! gradient path into the sampling distributions.

use partequiv_core::analysis::expectation_equivariance_test;
use partequiv_core::data::exact_transform_image;
use partequiv_core::dist::{grid_continuous, SampleSet, SubsetDistribution, UniformLieDistribution};
use partequiv_core::group::{compose, inverse, nearest_element, FiberElement, GroupKind, GroupSpec};
use partequiv_core::kernelnet::KernelVariant;
use partequiv_core::layers::{
    build_network, GroupConv, LiftedFeatureMap, LiftingConv, NetworkConfig, PoolingPlan, Sampling,
};
use partequiv_core::rng::Rng;
use partequiv_core::tensor::{Tape, TensorData};
use std::f32::consts::{FRAC_PI_2, PI};

fn c4_grid(tape: &Tape) -> SampleSet {
    let dist = UniformLieDistribution::new("c4", PI);
    grid_continuous(&dist, 4, tape)
}

/// Fiber index permutation realizing `L_w`: position `i` of the transformed
/// map reads the original at the coordinate `w^{-1} u_i`.
fn fiber_permutation(coords: &[FiberElement], w: FiberElement) -> Vec<usize> {
    coords
        .iter()
        .map(|&u| {
            let target = compose(inverse(w), u);
            let j = nearest_element(coords, target);
            let d = partequiv_core::group::wrap_angle(coords[j].theta - target.theta).abs();
            assert!(
                d < 1e-5 && coords[j].mirror == target.mirror,
                "coordinate set is not closed under {w:?}"
            );
            j
        })
        .collect()
}

/// Applies `L_w` to a lifted map: spatial index permutation per slice plus
/// the fiber permutation. Exact for quarter-turn multiples and mirrors.
fn transform_lifted(
    values: &TensorData,
    coords: &[FiberElement],
    w: FiberElement,
) -> Vec<f32> {
    let (b, c, n, h, wd) = (
        values.shape[0],
        values.shape[1],
        values.shape[2],
        values.shape[3],
        values.shape[4],
    );
    let perm = fiber_permutation(coords, w);
    let mut out = vec![0.0; values.data.len()];
    for bi in 0..b {
        for ci in 0..c {
            for ni in 0..n {
                let src = perm[ni];
                let off_src = ((bi * c + ci) * n + src) * h * wd;
                let slice = &values.data[off_src..off_src + h * wd];
                let rotated = exact_transform_image(w, slice, h, wd);
                let off_dst = ((bi * c + ci) * n + ni) * h * wd;
                out[off_dst..off_dst + h * wd].copy_from_slice(&rotated);
            }
        }
    }
    out
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

fn random_image(shape: Vec<usize>, seed: u64) -> TensorData {
    let mut rng = Rng::from_seed(seed);
    let n = shape.iter().product();
    TensorData::new(shape, (0..n).map(|_| rng.uniform()).collect())
}

#[test]
fn lifting_is_exactly_equivariant_on_c4() {
    let mut rng = Rng::from_seed(21);
    let lift = LiftingConv::new("l", KernelVariant::Siren, 1, 3, 5, 16, &mut rng);
    let tape = Tape::new();
    let set = c4_grid(&tape);
    let img = random_image(vec![2, 1, 8, 8], 1);

    let out_plain = lift.forward(&tape, &tape.constant(img.clone()), &set);
    let coords = out_plain.coords.clone();
    for turns in 1..4u32 {
        let w = FiberElement::rotation(turns as f32 * FRAC_PI_2);
        let mut rotated = Vec::new();
        for i in 0..2 {
            let plane = &img.data[i * 64..(i + 1) * 64];
            rotated.extend(exact_transform_image(w, plane, 8, 8));
        }
        let out_moved = lift.forward(
            &tape,
            &tape.constant_vec(vec![2, 1, 8, 8], rotated),
            &set,
        );
        let expected = transform_lifted(&out_plain.values.value(), &coords, w);
        let diff = max_abs_diff(&out_moved.values.data(), &expected);
        assert!(diff < 1e-4, "lifting permutation identity at {turns} turns: {diff}");
    }
}

#[test]
fn group_conv_is_exactly_equivariant_on_c4() {
    let mut rng = Rng::from_seed(22);
    let gconv = GroupConv::new(
        "g",
        KernelVariant::Siren,
        GroupSpec::new(GroupKind::SO2),
        2,
        2,
        3,
        16,
        &mut rng,
    );
    let tape = Tape::new();
    let set = c4_grid(&tape);
    let values = random_image(vec![1, 2, 4, 6, 6], 2);
    let input = LiftedFeatureMap {
        values: tape.constant(values.clone()),
        coords: set.elements.clone(),
        angles: set.angles.clone(),
    };
    let out_plain = gconv.forward(&tape, &input, &set);

    for turns in 1..4u32 {
        let w = FiberElement::rotation(turns as f32 * FRAC_PI_2);
        let moved_in = transform_lifted(&values, &set.elements, w);
        let input_moved = LiftedFeatureMap {
            values: tape.constant_vec(vec![1, 2, 4, 6, 6], moved_in),
            coords: set.elements.clone(),
            angles: set.angles.clone(),
        };
        let out_moved = gconv.forward(&tape, &input_moved, &set);
        let expected = transform_lifted(&out_plain.values.value(), &out_plain.coords, w);
        let diff = max_abs_diff(&out_moved.values.data(), &expected);
        assert!(diff < 1e-4, "group conv permutation identity at {turns} turns: {diff}");
    }
}

#[test]
fn mirror_group_layers_are_exactly_equivariant() {
    let mut rng = Rng::from_seed(23);
    let spec = GroupSpec::new(GroupKind::Mirror);
    let lift = LiftingConv::new("l", KernelVariant::Siren, 1, 2, 5, 16, &mut rng);
    let gconv = GroupConv::new("g", KernelVariant::Siren, spec, 2, 2, 3, 16, &mut rng);
    let tape = Tape::new();
    let dist = SubsetDistribution::full_support("m", spec);
    let set = dist.grid(2, &tape);
    let mirror = FiberElement::new(0.0, -1.0);

    let img = random_image(vec![1, 1, 8, 8], 3);
    let lifted = lift.forward(&tape, &tape.constant(img.clone()), &set);
    let out = gconv.forward(&tape, &lifted, &set);

    let flipped = exact_transform_image(mirror, &img.data, 8, 8);
    let lifted_m = lift.forward(&tape, &tape.constant_vec(vec![1, 1, 8, 8], flipped), &set);
    let out_m = gconv.forward(&tape, &lifted_m, &set);

    let expected_lift = transform_lifted(&lifted.values.value(), &lifted.coords, mirror);
    assert!(
        max_abs_diff(&lifted_m.values.data(), &expected_lift) < 1e-4,
        "mirror lifting identity"
    );
    let expected = transform_lifted(&out.values.value(), &out.coords, mirror);
    assert!(
        max_abs_diff(&out_m.values.data(), &expected) < 1e-4,
        "mirror group conv identity"
    );
}

fn small_c4_network(seed: u64) -> partequiv_core::layers::Network {
    let cfg = NetworkConfig {
        group: GroupSpec::new(GroupKind::SO2),
        n_max: 4,
        channels: 4,
        blocks: 2,
        lift_kernel: 5,
        conv_kernel: 3,
        kernel_hidden: 8,
        variant: KernelVariant::Siren,
        partial: false,
        pooling: PoolingPlan::after_blocks(2),
        in_channels: 1,
        classes: 10,
    };
    let mut rng = Rng::from_seed(seed);
    build_network(&cfg, &mut rng).unwrap()
}

#[test]
fn full_network_logits_invariant_under_c4() {
    let net = small_c4_network(31);
    for trial in 0..10u64 {
        let img = random_image(vec![1, 1, 16, 16], 100 + trial);
        let tape = Tape::new();
        let base = net
            .forward(&tape, &tape.constant(img.clone()), false, &mut Sampling::Grid)
            .data();
        for turns in 1..4u32 {
            let w = FiberElement::rotation(turns as f32 * FRAC_PI_2);
            let rotated = exact_transform_image(w, &img.data, 16, 16);
            let tape = Tape::new();
            let logits = net
                .forward(
                    &tape,
                    &tape.constant_vec(vec![1, 1, 16, 16], rotated),
                    false,
                    &mut Sampling::Grid,
                )
                .data();
            let diff = max_abs_diff(&base, &logits);
            assert!(
                diff < 1e-4,
                "logit invariance trial {trial} turns {turns}: {diff}"
            );
        }
    }
}

fn test_plane_fn(theta: f32) -> Vec<f32> {
    // bandlimited 9x9 plane signal varying along the fiber
    let mut out = Vec::with_capacity(81);
    for i in 0..81 {
        let a = 0.37 * i as f32;
        out.push((theta + a).sin() + 0.5 * (2.0 * theta - 0.11 * i as f32).cos());
    }
    out
}

fn expectation_conv(seed: u64) -> GroupConv {
    let mut rng = Rng::from_seed(seed);
    GroupConv::new(
        "e",
        KernelVariant::Siren,
        GroupSpec::new(GroupKind::SO2),
        1,
        1,
        1,
        16,
        &mut rng,
    )
}

#[test]
fn uniform_sampling_is_equivariant_in_expectation() {
    let conv = expectation_conv(41);
    let out_coords: Vec<FiberElement> = (0..8)
        .map(|i| FiberElement::rotation(-PI + 2.0 * PI * i as f32 / 8.0))
        .collect();
    let mut rng = Rng::from_seed(8);
    let report = expectation_equivariance_test(
        &conv,
        &test_plane_fn,
        (9, 9),
        &out_coords,
        FiberElement::rotation(PI / 4.0),
        500,
        16,
        None,
        &mut rng,
    )
    .unwrap();
    assert!(
        report.pass,
        "uniform sampling must pass the 3-sigma test, max {:.2}σ",
        report.max_sigma
    );

    // identity transformation: the paired draws cancel exactly
    let mut rng = Rng::from_seed(43);
    let report = expectation_equivariance_test(
        &conv,
        &test_plane_fn,
        (9, 9),
        &out_coords,
        FiberElement::identity(),
        100,
        16,
        None,
        &mut rng,
    )
    .unwrap();
    assert!(report.mean_abs < 1e-9, "identity statistic {}", report.mean_abs);
    assert!(report.pass);
}

#[test]
fn truncated_sampling_fails_the_expectation_test() {
    let conv = expectation_conv(44);
    let out_coords: Vec<FiberElement> = (0..8)
        .map(|i| FiberElement::rotation(-PI + 2.0 * PI * i as f32 / 8.0))
        .collect();
    let mut rng = Rng::from_seed(45);
    let report = expectation_equivariance_test(
        &conv,
        &test_plane_fn,
        (9, 9),
        &out_coords,
        FiberElement::rotation(PI / 4.0),
        500,
        16,
        Some((-PI / 3.0, PI / 3.0)),
        &mut rng,
    )
    .unwrap();
    assert!(
        !report.pass,
        "truncated support must break equivariance in expectation, max {:.2}σ",
        report.max_sigma
    );
}

#[test]
fn expectation_test_rejects_tiny_resample_counts() {
    let conv = expectation_conv(46);
    let mut rng = Rng::from_seed(47);
    let err = expectation_equivariance_test(
        &conv,
        &test_plane_fn,
        (9, 9),
        &[FiberElement::identity()],
        FiberElement::identity(),
        1,
        4,
        None,
        &mut rng,
    );
    assert!(err.is_err());
}

#[test]
fn resampled_forwards_differ_but_expectations_agree() {
    let conv = expectation_conv(48);
    let tape = Tape::new();
    let out_coords: Vec<FiberElement> =
        (0..4).map(|i| FiberElement::rotation(i as f32 * FRAC_PI_2 - PI)).collect();
    let out_set = SampleSet {
        elements: out_coords.clone(),
        angles: tape.constant_vec(vec![4], out_coords.iter().map(|e| e.theta).collect()),
        weights: None,
    };
    let mut rng = Rng::from_seed(49);
    let mut run = |rng: &mut Rng| -> Vec<f32> {
        let vs: Vec<FiberElement> = (0..12)
            .map(|_| FiberElement::rotation(rng.uniform_in(-PI, PI)))
            .collect();
        let mut values = Vec::new();
        for v in &vs {
            values.extend(test_plane_fn(v.theta));
        }
        let input = LiftedFeatureMap {
            values: tape.constant_vec(vec![1, 1, 12, 9, 9], values),
            coords: vs.clone(),
            angles: tape.constant_vec(vec![12], vs.iter().map(|e| e.theta).collect()),
        };
        conv.forward(&tape, &input, &out_set).values.data()
    };

    let single_a = run(&mut rng);
    let single_b = run(&mut rng);
    assert!(
        max_abs_diff(&single_a, &single_b) > 1e-4,
        "independent sample sets should give different outputs"
    );

    let m = 200;
    let elems = single_a.len();
    let mut acc = [vec![0.0f64; elems], vec![0.0f64; elems]];
    let mut sq = vec![0.0f64; elems];
    for batch in 0..2 {
        for _ in 0..m {
            let out = run(&mut rng);
            for (i, &v) in out.iter().enumerate() {
                acc[batch][i] += v as f64;
                sq[i] += (v as f64) * (v as f64);
            }
        }
    }
    let total = 2.0 * m as f64;
    for i in 0..elems {
        let m1 = acc[0][i] / m as f64;
        let m2 = acc[1][i] / m as f64;
        let mean = (acc[0][i] + acc[1][i]) / total;
        let var = (sq[i] / total - mean * mean).max(0.0);
        let se = (2.0 * var / m as f64).sqrt().max(1e-9);
        assert!(
            (m1 - m2).abs() <= 5.0 * se,
            "means differ beyond Monte Carlo error at {i}: {m1} vs {m2} (se {se})"
        );
    }
}

#[test]
fn gradient_reaches_theta_through_the_convolution() {
    // frozen noise: reseed the same stream for every evaluation
    let spec = GroupSpec::new(GroupKind::SO2);
    let mut rng = Rng::from_seed(51);
    let gconv = GroupConv::new("g", KernelVariant::Siren, spec, 1, 1, 3, 8, &mut rng);
    let dist = UniformLieDistribution::new("theta", 1.0);
    let input_vals = random_image(vec![1, 1, 3, 5, 5], 52);
    let in_coords: Vec<FiberElement> =
        (0..3).map(|i| FiberElement::rotation(i as f32 - 1.0)).collect();

    let forward = |theta: f32| -> (f32, Option<f32>) {
        dist.theta_max.update(|t| t[0] = theta);
        dist.theta_max.zero_grad();
        let tape = Tape::new();
        let mut noise_rng = Rng::from_seed(53);
        let set = partequiv_core::dist::sample_continuous(&dist, 5, &tape, &mut noise_rng);
        let input = LiftedFeatureMap {
            values: tape.constant(input_vals.clone()),
            coords: in_coords.clone(),
            angles: tape.constant_vec(vec![3], in_coords.iter().map(|e| e.theta).collect()),
        };
        let out = gconv.forward(&tape, &input, &set);
        let loss = out.values.mean();
        tape.backward(&loss);
        (loss.item(), Some(dist.theta_max.grad().data[0]))
    };

    let (_, grad) = forward(1.0);
    let grad = grad.unwrap();
    assert!(grad != 0.0, "loss must be sensitive to theta");
    let h = 1e-3;
    let (lp, _) = forward(1.0 + h);
    let (lm, _) = forward(1.0 - h);
    let fd = (lp - lm) / (2.0 * h);
    let diff = (grad - fd).abs();
    assert!(
        diff < 1e-4 || diff / fd.abs().max(grad.abs()) < 1e-3,
        "theta gradient: analytic {grad} vs fd {fd}"
    );
}

#[test]
fn partial_layer_error_grows_with_transformation_size() {
    // group conv restricted to θ = π/3, pointwise kernels, inputs on C16;
    // the responses inside the subset change more for larger rotations
    let mut rng = Rng::from_seed(61);
    let conv = GroupConv::new(
        "m",
        KernelVariant::Siren,
        GroupSpec::new(GroupKind::SO2),
        1,
        1,
        1,
        16,
        &mut rng,
    );
    let theta = PI / 3.0;
    let n_sub = 6;
    let sub_coords: Vec<FiberElement> = (0..n_sub)
        .map(|i| FiberElement::rotation(theta * (-1.0 + 2.0 * i as f32 / (n_sub - 1) as f32)))
        .collect();
    let in_coords: Vec<FiberElement> = (0..16)
        .map(|i| FiberElement::rotation(-PI + 2.0 * PI * i as f32 / 16.0))
        .collect();

    let mut errors = vec![0.0f64; 4];
    let w_list = [PI / 8.0, PI / 4.0, PI / 2.0, PI];
    for trial in 0..20u64 {
        let mut trng = Rng::from_seed(1000 + trial);
        let coeffs: Vec<f32> = (0..4).map(|_| trng.uniform_in(-1.0, 1.0)).collect();
        let f = |t: f32| -> f32 {
            coeffs[0] * t.sin() + coeffs[1] * t.cos() + coeffs[2] * (2.0 * t).sin()
                + coeffs[3] * (2.0 * t).cos()
        };
        let tape = Tape::new();
        let eval = |outs: &[FiberElement], shift: f32| -> Vec<f32> {
            let mut values = Vec::new();
            for v in &in_coords {
                values.push(f(v.theta - shift));
            }
            let input = LiftedFeatureMap {
                values: tape.constant_vec(vec![1, 1, 16, 1, 1], values),
                coords: in_coords.clone(),
                angles: tape
                    .constant_vec(vec![16], in_coords.iter().map(|e| e.theta).collect()),
            };
            let set = SampleSet {
                elements: outs.to_vec(),
                angles: tape
                    .constant_vec(vec![outs.len()], outs.iter().map(|e| e.theta).collect()),
                weights: None,
            };
            conv.forward(&tape, &input, &set).values.data()
        };

        let plain_at = |coords: &[FiberElement]| eval(coords, 0.0);
        for (wi, &wv) in w_list.iter().enumerate() {
            let moved = eval(&sub_coords, wv);
            // transported plain response: Φf at w^{-1}u, zero outside S
            let shifted_coords: Vec<FiberElement> = sub_coords
                .iter()
                .map(|&u| compose(inverse(FiberElement::rotation(wv)), u))
                .collect();
            let inside: Vec<FiberElement> = shifted_coords
                .iter()
                .copied()
                .filter(|g| g.theta.abs() <= theta + 1e-6)
                .collect();
            let inside_vals = if inside.is_empty() {
                Vec::new()
            } else {
                plain_at(&inside)
            };
            let mut it = inside_vals.iter();
            let mut err = 0.0f64;
            for (idx, g) in shifted_coords.iter().enumerate() {
                let transported = if g.theta.abs() <= theta + 1e-6 {
                    *it.next().unwrap()
                } else {
                    0.0
                };
                err += ((transported - moved[idx]) as f64).powi(2);
            }
            errors[wi] += err / 20.0;
        }
    }
    for i in 1..errors.len() {
        assert!(
            errors[i] + 1e-12 >= errors[i - 1],
            "equivariance error must not decrease: {errors:?}"
        );
    }
    assert!(errors[3] > errors[0] * 1.5, "π error should clearly exceed π/8");
}
