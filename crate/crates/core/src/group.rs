//! Point groups acting on the image plane: SO(2), the two-element mirror
//! group M, their semidirect product O(2) = SO(2) ⋊ M, and the trivial group.
//!
//! Elements are rotation-angle / mirror-flag pairs. Angles are radians, kept
//! in the canonical range `[-π, π)` after every operation. The plane action
//! uses the frame `p = (row offset, col offset)` from the image center, so
//! the mirror generator `(0, -1)` negates the second (column) coordinate:
//! a horizontal flip of the image.

use std::f32::consts::PI;
use thiserror::Error;

/// Reduces an angle to the canonical range `[-π, π)`.
pub fn wrap_angle(theta: f32) -> f32 {
    let two_pi = 2.0 * PI;
    let mut t = (theta + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can land on +π through rounding; fold it back.
    if t >= PI {
        t -= two_pi;
    }
    t
}

/// An element of the point group: a rotation angle and a mirror sign.
///
/// Composition follows the semidirect-product rule
/// `(a.theta + a.mirror * b.theta, a.mirror * b.mirror)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberElement {
    /// Rotation angle in radians, canonical range `[-π, π)`.
    pub theta: f32,
    /// Mirror sign, `+1.0` or `-1.0`.
    pub mirror: f32,
}

impl FiberElement {
    pub fn new(theta: f32, mirror: f32) -> Self {
        assert!(
            mirror == 1.0 || mirror == -1.0,
            "mirror flag must be +1 or -1, got {mirror}"
        );
        FiberElement {
            theta: wrap_angle(theta),
            mirror,
        }
    }

    pub fn rotation(theta: f32) -> Self {
        FiberElement::new(theta, 1.0)
    }

    pub fn identity() -> Self {
        FiberElement {
            theta: 0.0,
            mirror: 1.0,
        }
    }

    pub fn is_identity(&self, tol: f32) -> bool {
        self.mirror > 0.0 && self.theta.abs() <= tol
    }
}

/// Group product `a · b`, angle reduced to `[-π, π)`.
pub fn compose(a: FiberElement, b: FiberElement) -> FiberElement {
    FiberElement {
        theta: wrap_angle(a.theta + a.mirror * b.theta),
        mirror: a.mirror * b.mirror,
    }
}

/// Group inverse: `(-m·θ, m)`. Mirror-rotations are involutions.
pub fn inverse(g: FiberElement) -> FiberElement {
    FiberElement {
        theta: wrap_angle(-g.mirror * g.theta),
        mirror: g.mirror,
    }
}

/// Action on the plane: `R(θ) · Mir(m) · p` with `Mir(-1) = diag(1, -1)`.
pub fn act_on_plane(g: FiberElement, p: [f32; 2]) -> [f32; 2] {
    let (s, c) = g.theta.sin_cos();
    let q = [p[0], g.mirror * p[1]];
    [c * q[0] - s * q[1], s * q[0] + c * q[1]]
}

/// Exponential chart of SO(2): the angle coordinate itself, wrapped.
pub fn exp_so2(algebra_coord: f32) -> FiberElement {
    FiberElement::rotation(algebra_coord)
}

#[derive(Debug, Error, PartialEq)]
pub enum GroupError {
    #[error("log_so2: element with mirror flag {0} is not in the identity component")]
    NotInIdentityComponent(f32),
    #[error("enumerate_discrete: {0}")]
    BadEnumeration(String),
}

/// Logarithm chart of SO(2); defined only on pure rotations.
pub fn log_so2(g: FiberElement) -> Result<f32, GroupError> {
    if g.mirror != 1.0 {
        return Err(GroupError::NotInIdentityComponent(g.mirror));
    }
    Ok(g.theta)
}

/// Which point group a layer or network is built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Trivial,
    SO2,
    Mirror,
    O2,
}

impl GroupKind {
    /// Whether elements carry a mirror axis.
    pub fn has_mirror(&self) -> bool {
        matches!(self, GroupKind::Mirror | GroupKind::O2)
    }

    /// Whether elements carry a continuous rotation axis.
    pub fn has_rotation(&self) -> bool {
        matches!(self, GroupKind::SO2 | GroupKind::O2)
    }
}

/// Group descriptor used by layers and configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSpec {
    pub kind: GroupKind,
}

impl GroupSpec {
    pub fn new(kind: GroupKind) -> Self {
        GroupSpec { kind }
    }
}

/// Enumerates a discrete subgroup with `n` elements: the cyclic group `C_n`
/// for SO(2), `{e, m}` for the mirror group, `C_{n/2} × {±1}` for O(2).
///
/// The returned set is closed under [`compose`].
pub fn enumerate_discrete(spec: GroupSpec, n: usize) -> Result<Vec<FiberElement>, GroupError> {
    if n == 0 {
        return Err(GroupError::BadEnumeration(
            "element count must be at least 1".into(),
        ));
    }
    match spec.kind {
        GroupKind::Trivial => {
            if n != 1 {
                return Err(GroupError::BadEnumeration(format!(
                    "trivial group has exactly 1 element, requested {n}"
                )));
            }
            Ok(vec![FiberElement::identity()])
        }
        GroupKind::SO2 => Ok(cyclic(n, 1.0)),
        GroupKind::Mirror => {
            if n != 2 {
                return Err(GroupError::BadEnumeration(format!(
                    "mirror group has exactly 2 elements, requested {n}"
                )));
            }
            Ok(vec![FiberElement::identity(), FiberElement::new(0.0, -1.0)])
        }
        GroupKind::O2 => {
            if n % 2 != 0 {
                return Err(GroupError::BadEnumeration(format!(
                    "O(2) enumeration needs an even count (rotations × mirror), requested {n}"
                )));
            }
            let half = n / 2;
            let mut out = cyclic(half, 1.0);
            out.extend(cyclic(half, -1.0));
            Ok(out)
        }
    }
}

fn cyclic(n: usize, mirror: f32) -> Vec<FiberElement> {
    (0..n)
        .map(|k| FiberElement::new(2.0 * PI * k as f32 / n as f32, mirror))
        .collect()
}

/// Index of the element of `set` closest to `g`: smallest circle distance
/// among elements with a matching mirror flag (falling back to the nearest
/// angle overall if no flag matches).
pub fn nearest_element(set: &[FiberElement], g: FiberElement) -> usize {
    let mut best = 0;
    let mut best_d = f32::INFINITY;
    for (i, e) in set.iter().enumerate() {
        let mirror_penalty = if e.mirror == g.mirror { 0.0 } else { 1e6 };
        let d = wrap_angle(e.theta - g.theta).abs() + mirror_penalty;
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}
