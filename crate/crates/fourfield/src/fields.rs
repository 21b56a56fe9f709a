//! The time-conditioned implicit scene.
//!
//! Foreground: a stack of style-modulated layers over positionally
//! encoded spatial queries, with the motion vector added once after the
//! first layer and a two-layer density head under a softplus. Background:
//! a second modulated MLP over the inverse-sphere parameterization of
//! points outside the unit ball, deliberately blind to motion and time.

use crate::error::{Error, Result};
use crate::nn::{Binder, BoundLinear, BoundModLinear, Linear, ModLinear, Param};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Frequency bands for spatial positional encoding.
pub const SPATIAL_PE_BANDS: usize = 10;

/// Fourier-feature encoding of a batch of points.
///
/// Per coordinate c: [sin(2⁰πc), cos(2⁰πc), …, sin(2^{L−1}πc),
/// cos(2^{L−1}πc)]; output dim `2·L·dim`. The raw coordinate is not
/// appended.
pub fn positional_encode(points: &[f64], dim: usize, bands: usize) -> Vec<f64> {
    assert!(bands >= 1, "positional_encode: need at least one band");
    assert_eq!(points.len() % dim, 0);
    let n = points.len() / dim;
    let mut out = Vec::with_capacity(n * dim * 2 * bands);
    for p in 0..n {
        for c in 0..dim {
            let x = points[p * dim + c];
            for j in 0..bands {
                let arg = (1u64 << j) as f64 * std::f64::consts::PI * x;
                out.push(arg.sin());
                out.push(arg.cos());
            }
        }
    }
    out
}

pub fn positional_dim(dim: usize, bands: usize) -> usize {
    2 * bands * dim
}

/// Map a point with ‖x‖ ≥ 1 to (x/‖x‖, 1/‖x‖). The fourth component lies
/// in (0, 1].
pub fn inverse_sphere_param(x: [f64; 3]) -> Result<[f64; 4]> {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if r < 1.0 - 1e-9 {
        return Err(Error::DomainError {
            what: "radius",
            value: r,
            range: "[1, inf)",
        });
    }
    Ok([x[0] / r, x[1] / r, x[2] / r, 1.0 / r])
}

/// One implicit-field MLP: modulated layers with leaky-relu, an optional
/// motion injection after layer 1, and a plain two-layer density head
/// under softplus.
#[derive(Debug, Clone)]
pub struct FieldNet {
    pub layers: Vec<ModLinear>,
    /// Maps the motion vector to the layer-1 output dim when they differ.
    pub motion_adapter: Option<Linear>,
    pub density_head: [Linear; 2],
    pub slope: f64,
    accepts_motion: bool,
}

impl FieldNet {
    /// Foreground field over `2·bands·3`-dim encoded points.
    #[allow(clippy::too_many_arguments)]
    pub fn init_foreground(
        prefix: &str,
        w_dim: usize,
        n_dim: usize,
        depth: usize,
        hidden: usize,
        feature_dim: usize,
        bands: usize,
        slope: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(depth >= 2, "field needs at least two layers");
        let in_dim = positional_dim(3, bands);
        let layers = Self::make_layers(prefix, w_dim, in_dim, depth, hidden, feature_dim, rng);
        let layer1_out = layers[0].w.shape[1];
        let motion_adapter = if n_dim != layer1_out {
            Some(Linear::init(
                &format!("{prefix}.adapter"),
                n_dim,
                layer1_out,
                rng,
            ))
        } else {
            None
        };
        FieldNet {
            layers,
            motion_adapter,
            density_head: Self::make_density_head(prefix, feature_dim, hidden, rng),
            slope,
            accepts_motion: true,
        }
    }

    /// Background field over encoded inverse-sphere 4-vectors. Takes no
    /// motion input by construction. `feature_dim` must match the
    /// foreground field so both feed one quadrature.
    #[allow(clippy::too_many_arguments)]
    pub fn init_background(
        prefix: &str,
        w_dim: usize,
        depth: usize,
        hidden: usize,
        feature_dim: usize,
        bands: usize,
        slope: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(depth >= 2, "field needs at least two layers");
        let in_dim = positional_dim(4, bands);
        let layers = Self::make_layers(prefix, w_dim, in_dim, depth, hidden, feature_dim, rng);
        FieldNet {
            layers,
            motion_adapter: None,
            density_head: Self::make_density_head(prefix, feature_dim, hidden, rng),
            slope,
            accepts_motion: false,
        }
    }

    fn make_layers(
        prefix: &str,
        w_dim: usize,
        in_dim: usize,
        depth: usize,
        hidden: usize,
        feature_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<ModLinear> {
        (0..depth)
            .map(|i| {
                let fan_in = if i == 0 { in_dim } else { hidden };
                let fan_out = if i == depth - 1 { feature_dim } else { hidden };
                ModLinear::init(&format!("{prefix}.phi{i}"), w_dim, fan_in, fan_out, rng)
            })
            .collect()
    }

    fn make_density_head(
        prefix: &str,
        feature_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> [Linear; 2] {
        [
            Linear::init(&format!("{prefix}.sigma0"), feature_dim, hidden, rng),
            Linear::init(&format!("{prefix}.sigma1"), hidden, 1, rng),
        ]
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().unwrap().w.shape[1]
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.layers.iter().flat_map(|l| l.params()).collect();
        if let Some(a) = &self.motion_adapter {
            p.extend(a.params());
        }
        for h in &self.density_head {
            p.extend(h.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        if let Some(a) = &mut self.motion_adapter {
            p.extend(a.params_mut());
        }
        for h in &mut self.density_head {
            p.extend(h.params_mut());
        }
        p
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundField> {
        Ok(BoundField {
            layers: self
                .layers
                .iter()
                .map(|l| l.bind(b))
                .collect::<Result<_>>()?,
            motion_adapter: self
                .motion_adapter
                .as_ref()
                .map(|a| a.bind(b))
                .transpose()?,
            density_head: [self.density_head[0].bind(b)?, self.density_head[1].bind(b)?],
            slope: self.slope,
            accepts_motion: self.accepts_motion,
        })
    }
}

pub struct BoundField {
    layers: Vec<BoundModLinear>,
    motion_adapter: Option<BoundLinear>,
    density_head: [BoundLinear; 2],
    slope: f64,
    accepts_motion: bool,
}

/// Features and densities for a batch of query points.
pub struct FieldBatch {
    /// [N, feature_dim]
    pub features: Tensor,
    /// [N, 1], non-negative
    pub density: Tensor,
}

impl BoundField {
    /// Evaluate the field on pre-encoded points.
    ///
    /// `encoded`: [N, in_dim]; `w_style`: [1, D_w]; `motion`: the motion
    /// vector [1, D_n] for the foreground, or `None` for fields that do
    /// not take motion (equivalently: the static n ≡ 0 mode).
    pub fn eval(
        &self,
        encoded: &Tensor,
        w_style: &Tensor,
        motion: Option<&Tensor>,
    ) -> Result<FieldBatch> {
        if motion.is_some() && !self.accepts_motion {
            return Err(Error::ShapeMismatch {
                op: "field",
                details: "this field takes no motion input".into(),
            });
        }
        let mut h = self.layers[0].apply(encoded, w_style)?;
        if let Some(n) = motion {
            let n = match &self.motion_adapter {
                Some(a) => a.apply(n)?,
                None => n.clone(),
            };
            if n.shape()[1] != h.shape()[1] {
                return Err(Error::ShapeMismatch {
                    op: "field",
                    details: format!(
                        "motion dim {} vs layer-1 output {}",
                        n.shape()[1],
                        h.shape()[1]
                    ),
                });
            }
            h = h.add(&n)?; // broadcasts [1, H] over [N, H]
        }
        h = h.leaky_relu(self.slope)?;
        for layer in &self.layers[1..] {
            h = layer.apply(&h, w_style)?.leaky_relu(self.slope)?;
        }
        let features = h;
        let d = self.density_head[0]
            .apply(&features)?
            .leaky_relu(self.slope)?;
        let density = self.density_head[1].apply(&d)?.softplus()?;
        Ok(FieldBatch { features, density })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latents::sample_unit_sphere;
    use crate::tensor::{grad_check, Graph};
    use rand::SeedableRng;

    #[test]
    fn encoding_of_zero_point() {
        let e = positional_encode(&[0.0, 0.0, 0.0], 3, 5);
        assert_eq!(e.len(), 30);
        for pair in e.chunks(2) {
            assert_eq!(pair[0], 0.0); // sin
            assert_eq!(pair[1], 1.0); // cos
        }
    }

    #[test]
    fn encoding_dims_at_ten_bands() {
        assert_eq!(positional_dim(3, 10), 60);
        let e = positional_encode(&[0.3, -0.2, 0.9], 3, 10);
        assert_eq!(e.len(), 60);
    }

    #[test]
    fn encoding_single_band_is_sin_cos_pi() {
        let x = 0.37;
        let e = positional_encode(&[x], 1, 1);
        assert!((e[0] - (std::f64::consts::PI * x).sin()).abs() < 1e-15);
        assert!((e[1] - (std::f64::consts::PI * x).cos()).abs() < 1e-15);
    }

    #[test]
    fn inverse_sphere_boundary_and_arithmetic() {
        let p = inverse_sphere_param([0.0, 1.0, 0.0]).unwrap();
        assert_eq!(p, [0.0, 1.0, 0.0, 1.0]);
        let p = inverse_sphere_param([0.0, 0.0, 4.0]).unwrap();
        assert_eq!(p, [0.0, 0.0, 1.0, 0.25]);
    }

    #[test]
    fn inverse_sphere_rejects_interior() {
        assert!(matches!(
            inverse_sphere_param([0.1, 0.2, 0.0]).unwrap_err(),
            Error::DomainError { .. }
        ));
    }

    #[test]
    fn inverse_sphere_direction_is_unit() {
        for k in 1..20 {
            let x = [0.3 * k as f64, -0.1 * k as f64, 1.0 + 0.2 * k as f64];
            let p = inverse_sphere_param(x).unwrap();
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
            assert!(p[3] > 0.0 && p[3] <= 1.0);
        }
    }

    fn tiny_fg(rng: &mut ChaCha8Rng) -> FieldNet {
        FieldNet::init_foreground("fg", 4, 3, 2, 5, 5, 2, 0.2, rng)
    }

    #[test]
    fn density_is_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = tiny_fg(&mut rng);
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let pts: Vec<f64> = (0..30).map(|i| (i as f64) * 0.17 - 2.0).collect();
        let enc = positional_encode(&pts, 3, 2);
        let enc = g.constant(&[10, 12], &enc).unwrap();
        let w = g
            .constant(&[1, 4], &sample_unit_sphere(4, &mut rng))
            .unwrap();
        let n = g.constant(&[1, 3], &[0.3, -0.5, 0.9]).unwrap();
        let out = bound.eval(&enc, &w, Some(&n)).unwrap();
        for d in out.density.values() {
            assert!(d >= 0.0);
        }
        assert_eq!(out.features.shape(), &[10, 5]);
    }

    #[test]
    fn same_inputs_same_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = tiny_fg(&mut rng);
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let enc = positional_encode(&[0.1, 0.2, 0.3], 3, 2);
        let enc = g.constant(&[1, 12], &enc).unwrap();
        let w = g
            .constant(&[1, 4], &sample_unit_sphere(4, &mut rng))
            .unwrap();
        let n = g.constant(&[1, 3], &[0.3, -0.5, 0.9]).unwrap();
        let a = bound.eval(&enc, &w, Some(&n)).unwrap();
        let b = bound.eval(&enc, &w, Some(&n)).unwrap();
        assert_eq!(a.features.values(), b.features.values());
        assert_eq!(a.density.values(), b.density.values());
    }

    #[test]
    fn zero_motion_matches_none_when_dims_align() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = FieldNet::init_foreground("fg", 4, 5, 2, 5, 5, 2, 0.2, &mut rng);
        assert!(net.motion_adapter.is_none(), "dims match, no adapter");
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let enc = positional_encode(&[0.3, -0.1, 0.2], 3, 2);
        let enc = g.constant(&[1, 12], &enc).unwrap();
        let w = g
            .constant(&[1, 4], &sample_unit_sphere(4, &mut rng))
            .unwrap();
        let zero = g.zeros(&[1, 5]).unwrap();
        let with_zero = bound.eval(&enc, &w, Some(&zero)).unwrap();
        let without = bound.eval(&enc, &w, None).unwrap();
        assert_eq!(with_zero.features.values(), without.features.values());
        assert_eq!(with_zero.density.values(), without.density.values());
    }

    #[test]
    fn background_refuses_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = FieldNet::init_background("bg", 4, 2, 4, 4, 2, 0.2, &mut rng);
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let enc = positional_encode(&[0.0, 0.0, 1.0, 0.5], 4, 2);
        let enc = g.constant(&[1, 16], &enc).unwrap();
        let w = g
            .constant(&[1, 4], &sample_unit_sphere(4, &mut rng))
            .unwrap();
        let n = g.constant(&[1, 4], &[0.0; 4]).unwrap();
        assert!(bound.eval(&enc, &w, Some(&n)).is_err());
        assert!(bound.eval(&enc, &w, None).is_ok());
    }

    #[test]
    fn grad_check_density_wrt_w_n_and_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = tiny_fg(&mut rng);
        let point = [0.21, -0.34, 0.55];
        let w0 = sample_unit_sphere(4, &mut rng);
        let n0 = [0.4, -0.2, 0.3];

        let r = grad_check(
            |g, x| {
                let bound = net.bind(&mut Binder::new(g))?;
                let enc = positional_encode(&point, 3, 2);
                let enc = g.constant(&[1, 12], &enc)?;
                let n = g.constant(&[1, 3], &n0)?;
                let out = bound.eval(&enc, &x.reshape(&[1, 4])?, Some(&n))?;
                out.density.sum_all()
            },
            &[4],
            &w0,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "w: {}", r.max_rel_err);

        let r = grad_check(
            |g, x| {
                let bound = net.bind(&mut Binder::new(g))?;
                let enc = positional_encode(&point, 3, 2);
                let enc = g.constant(&[1, 12], &enc)?;
                let w = g.constant(&[1, 4], &w0)?;
                let out = bound.eval(&enc, &w, Some(&x.reshape(&[1, 3])?))?;
                out.density.sum_all()
            },
            &[3],
            &n0,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "n: {}", r.max_rel_err);

        let enc0 = positional_encode(&point, 3, 2);
        let r = grad_check(
            |g, x| {
                let bound = net.bind(&mut Binder::new(g))?;
                let w = g.constant(&[1, 4], &w0)?;
                let n = g.constant(&[1, 3], &n0)?;
                let out = bound.eval(&x.reshape(&[1, 12])?, &w, Some(&n))?;
                out.density.sum_all()
            },
            &[12],
            &enc0,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "x: {}", r.max_rel_err);
    }

    #[test]
    fn grad_check_background_wrt_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = FieldNet::init_background("bg", 4, 2, 4, 4, 2, 0.2, &mut rng);
        let w0 = sample_unit_sphere(4, &mut rng);
        let r = grad_check(
            |g, x| {
                let bound = net.bind(&mut Binder::new(g))?;
                let enc = positional_encode(&[0.6, -0.8, 0.0, 0.7], 4, 2);
                let enc = g.constant(&[1, 16], &enc)?;
                let out = bound.eval(&enc, &x.reshape(&[1, 4])?, None)?;
                out.density.add(&out.features.sum_all()?)?.sum_all()
            },
            &[4],
            &w0,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "max err {}", r.max_rel_err);
    }
}
