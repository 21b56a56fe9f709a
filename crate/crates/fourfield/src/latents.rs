//! Content/motion latent codes and their conditioning networks.
//!
//! The content code `z` and motion code `m` are sampled independently on
//! the unit hypersphere. `z` feeds an 8-layer mapping network producing
//! the style vector `w`; `m` together with a time value `t ∈ [0,1]` feeds
//! a 3-layer motion generator producing the motion vector `n(m, t)`. In
//! the default mode, `t` multiplies the first layer's output elementwise,
//! which forces `n(m, 0)` to be the same for every `m` — the property the
//! static (image) training mode relies on.

use crate::error::{Error, Result};
use crate::nn::{normal_draw, Binder, Linear, Mlp, Param};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// How the motion generator incorporates time. Multiplication is the
/// default; concatenation and positional encoding of time are ablation
/// variants that measured worse in our reference experiments (positional
/// encoding tends toward repetitive motions).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    /// `t` multiplies the first layer output (the default).
    Multiply,
    /// `t` is appended to the first layer output.
    Concat,
    /// Fourier features of `t` (tiled across channels) multiply the
    /// first layer output.
    Positional,
}

impl TimeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "multiply" => Ok(TimeMode::Multiply),
            "concat" => Ok(TimeMode::Concat),
            "positional" => Ok(TimeMode::Positional),
            other => Err(Error::UnknownMode {
                what: "time mode",
                value: other.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TimeMode::Multiply => "multiply",
            TimeMode::Concat => "concat",
            TimeMode::Positional => "positional",
        }
    }
}

/// Frequency bands for the positional time-encoding ablation.
pub const TIME_PE_BANDS: usize = 4;

/// Isotropic unit vector: standard-normal draw normalized to length 1.
pub fn sample_unit_sphere(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(dim >= 1, "sample_unit_sphere: dim must be >= 1");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal_draw(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Linear interpolation between two unit vectors, renormalized back onto
/// the sphere.
pub fn lerp_renorm(a: &[f64], b: &[f64], alpha: f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    let v: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (1.0 - alpha) * x + alpha * y)
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm.max(1e-12)).collect()
}

/// The content mapping network ζ(z) → w: 8 fully connected layers with
/// leaky-relu between them.
#[derive(Debug, Clone)]
pub struct MappingNet {
    pub net: Mlp,
}

pub const MAPPING_DEPTH: usize = 8;

impl MappingNet {
    pub fn init(z_dim: usize, w_dim: usize, slope: f64, rng: &mut ChaCha8Rng) -> Self {
        // 8 layers: z -> w_dim x7 -> w_dim
        let mut dims = vec![z_dim];
        dims.extend(std::iter::repeat_n(w_dim, MAPPING_DEPTH));
        MappingNet {
            net: Mlp::init("mapping", &dims, slope, rng),
        }
    }

    pub fn z_dim(&self) -> usize {
        self.net.layers[0].in_dim()
    }

    pub fn w_dim(&self) -> usize {
        self.net.layers.last().unwrap().out_dim()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundMapping> {
        Ok(BoundMapping {
            net: self.net.bind(b)?,
        })
    }
}

pub struct BoundMapping {
    net: crate::nn::BoundMlp,
}

impl BoundMapping {
    /// z: [1, D_z] → w: [1, D_w]
    pub fn style(&self, z: &Tensor) -> Result<Tensor> {
        self.net.apply(z)
    }
}

/// The motion generator n(m, t): three fully connected layers, time
/// injected between the first and second.
#[derive(Debug, Clone)]
pub struct MotionNet {
    pub psi1: Linear,
    pub psi2: Linear,
    pub psi3: Linear,
    /// Extra ψ² accepting the concatenated time channel.
    pub psi2_concat: Linear,
    pub slope: f64,
    pub mode: TimeMode,
}

impl MotionNet {
    pub fn init(
        m_dim: usize,
        hidden: usize,
        n_dim: usize,
        slope: f64,
        mode: TimeMode,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        MotionNet {
            psi1: Linear::init("motion.psi1", m_dim, hidden, rng),
            psi2: Linear::init("motion.psi2", hidden, hidden, rng),
            psi3: Linear::init("motion.psi3", hidden, n_dim, rng),
            psi2_concat: Linear::init("motion.psi2c", hidden + 1, hidden, rng),
            slope,
            mode,
        }
    }

    pub fn n_dim(&self) -> usize {
        self.psi3.out_dim()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.psi1.params();
        p.extend(self.psi2.params());
        p.extend(self.psi3.params());
        p.extend(self.psi2_concat.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.psi1.params_mut();
        p.extend(self.psi2.params_mut());
        p.extend(self.psi3.params_mut());
        p.extend(self.psi2_concat.params_mut());
        p
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundMotion> {
        Ok(BoundMotion {
            psi1: self.psi1.bind(b)?,
            psi2: self.psi2.bind(b)?,
            psi3: self.psi3.bind(b)?,
            psi2_concat: self.psi2_concat.bind(b)?,
            slope: self.slope,
            mode: self.mode,
        })
    }
}

pub struct BoundMotion {
    psi1: crate::nn::BoundLinear,
    psi2: crate::nn::BoundLinear,
    psi3: crate::nn::BoundLinear,
    psi2_concat: crate::nn::BoundLinear,
    slope: f64,
    mode: TimeMode,
}

impl BoundMotion {
    /// m: [1, D_m], t ∈ [0,1] → n: [1, D_n]
    pub fn motion_vector(&self, m: &Tensor, t: f64) -> Result<Tensor> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainError {
                what: "t",
                value: t,
                range: "[0, 1]",
            });
        }
        let g = m.graph().clone();
        let a1 = self.psi1.apply(m)?;
        let (h, psi2) = match self.mode {
            TimeMode::Multiply => (a1.scale(t)?, &self.psi2),
            TimeMode::Concat => {
                let tch = g.constant(&[1, 1], &[t])?;
                (Tensor::concat(&[&a1, &tch], 1)?, &self.psi2_concat)
            }
            TimeMode::Positional => {
                let hidden = a1.shape()[1];
                let pe = time_fourier(t);
                let gate: Vec<f64> = (0..hidden).map(|i| pe[i % pe.len()]).collect();
                let gate = g.constant(&[1, hidden], &gate)?;
                (a1.mul(&gate)?, &self.psi2)
            }
        };
        let h = h.leaky_relu(self.slope)?;
        let h = psi2.apply(&h)?.leaky_relu(self.slope)?;
        self.psi3.apply(&h)
    }
}

/// Fourier features of a scalar time value: [sin(2^j πt), cos(2^j πt)]
/// for j in 0..TIME_PE_BANDS.
fn time_fourier(t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * TIME_PE_BANDS);
    for j in 0..TIME_PE_BANDS {
        let arg = (1u64 << j) as f64 * std::f64::consts::PI * t;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, Graph};
    use rand::SeedableRng;

    fn unit_norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn sphere_samples_are_unit_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let v = sample_unit_sphere(16, &mut rng);
        assert!((unit_norm(&v) - 1.0).abs() < 1e-9);

        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let v2 = sample_unit_sphere(16, &mut rng2);
        assert_eq!(v, v2);
    }

    #[test]
    fn sphere_is_isotropic_in_the_mean() {
        // Monte-Carlo: per-coordinate empirical mean over 1e5 draws.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 8;
        let mut sums = vec![0.0; dim];
        let n = 100_000;
        for _ in 0..n {
            let v = sample_unit_sphere(dim, &mut rng);
            for (s, x) in sums.iter_mut().zip(&v) {
                *s += x;
            }
        }
        for s in &sums {
            assert!((s / n as f64).abs() < 0.02, "coordinate mean {}", s / n as f64);
        }
    }

    #[test]
    #[should_panic(expected = "dim must be >= 1")]
    fn sphere_dim_zero_panics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        sample_unit_sphere(0, &mut rng);
    }

    #[test]
    fn mapping_is_deterministic_with_8_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let map = MappingNet::init(8, 6, 0.2, &mut rng);
        assert_eq!(map.net.layers.len(), MAPPING_DEPTH);
        let z = sample_unit_sphere(8, &mut rng);
        let g = Graph::new();
        let bound = map.bind(&mut Binder::new(&g)).unwrap();
        let zt = g.constant(&[1, 8], &z).unwrap();
        let w1 = bound.style(&zt).unwrap();
        let w2 = bound.style(&zt).unwrap();
        assert_eq!(w1.values(), w2.values());
        assert_eq!(w1.shape(), &[1, 6]);
    }

    #[test]
    fn motion_at_time_zero_ignores_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = MotionNet::init(6, 8, 4, 0.2, TimeMode::Multiply, &mut rng);
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let m1 = sample_unit_sphere(6, &mut rng);
        let m2 = sample_unit_sphere(6, &mut rng);
        let m1 = g.constant(&[1, 6], &m1).unwrap();
        let m2 = g.constant(&[1, 6], &m2).unwrap();
        let n1 = bound.motion_vector(&m1, 0.0).unwrap().values();
        let n2 = bound.motion_vector(&m2, 0.0).unwrap().values();
        assert_eq!(n1, n2, "n(m, 0) must not depend on m");
    }

    #[test]
    fn motion_rejects_time_outside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = MotionNet::init(4, 4, 4, 0.2, TimeMode::Multiply, &mut rng);
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let m = g.constant(&[1, 4], &[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(
            bound.motion_vector(&m, 1.5).unwrap_err(),
            Error::DomainError { what: "t", .. }
        ));
    }

    #[test]
    fn concat_mode_keeps_output_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MotionNet::init(6, 8, 4, 0.2, TimeMode::Concat, &mut rng);
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let m = g.constant(&[1, 6], &sample_unit_sphere(6, &mut rng)).unwrap();
        let n = bound.motion_vector(&m, 0.35).unwrap();
        assert_eq!(n.shape(), &[1, 4]);
    }

    #[test]
    fn multiply_mode_matches_default_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = MotionNet::init(6, 8, 4, 0.2, TimeMode::Multiply, &mut rng);
        let mut variant = net.clone();
        variant.mode = TimeMode::Multiply;
        let g = Graph::new();
        let m = g.constant(&[1, 6], &sample_unit_sphere(6, &mut rng)).unwrap();
        let a = net.bind(&mut Binder::new(&g)).unwrap().motion_vector(&m, 0.7).unwrap();
        let b = variant.bind(&mut Binder::new(&g)).unwrap().motion_vector(&m, 0.7).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn motion_continuous_in_time() {
        // No jump on a fine t-grid exceeds 10x the median grid step diff.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = MotionNet::init(6, 8, 4, 0.2, TimeMode::Multiply, &mut rng);
        let g = Graph::new();
        let bound = net.bind(&mut Binder::new(&g)).unwrap();
        let m = g.constant(&[1, 6], &sample_unit_sphere(6, &mut rng)).unwrap();
        let grid: Vec<Vec<f64>> = (0..=64)
            .map(|i| {
                bound
                    .motion_vector(&m, i as f64 / 64.0)
                    .unwrap()
                    .values()
            })
            .collect();
        let mut diffs: Vec<f64> = grid
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let max = diffs.iter().cloned().fold(0.0, f64::max);
        diffs.sort_by(f64::total_cmp);
        let median = diffs[diffs.len() / 2];
        assert!(
            max <= 10.0 * median.max(1e-12),
            "jump {max} vs median {median}"
        );
    }

    #[test]
    fn grad_check_motion_wrt_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = MotionNet::init(5, 6, 3, 0.2, TimeMode::Multiply, &mut rng);
        let m0 = sample_unit_sphere(5, &mut rng);
        let r = grad_check(
            |g, x| {
                let bound = net.bind(&mut Binder::new(g))?;
                bound.motion_vector(&x.reshape(&[1, 5])?, 0.5)?.sum_all()
            },
            &[5],
            &m0,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "max err {}", r.max_rel_err);
    }

    #[test]
    fn grad_check_mapping_wrt_weights() {
        // Differentiate through all layer weights at once by binding them
        // from a flat probe vector.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let map = MappingNet::init(3, 3, 0.2, &mut rng);
        let z = sample_unit_sphere(3, &mut rng);
        let flat: Vec<f64> = map
            .params()
            .iter()
            .flat_map(|p| p.values.iter().cloned())
            .collect();
        let shapes: Vec<Vec<usize>> = map.params().iter().map(|p| p.shape.clone()).collect();

        let r = grad_check(
            |g, x| {
                let mut h = g.constant(&[1, 3], &z)?;
                let mut off = 0usize;
                let mut tensors = Vec::new();
                for sh in &shapes {
                    let n: usize = sh.iter().product();
                    let t = x.slice(&[(off, off + n)])?.reshape(sh)?;
                    tensors.push(t);
                    off += n;
                }
                for (i, wb) in tensors.chunks(2).enumerate() {
                    h = h.matmul(&wb[0])?.add(&wb[1])?;
                    if i + 1 < MAPPING_DEPTH {
                        h = h.leaky_relu(0.2)?;
                    }
                }
                h.sum_all()
            },
            &[flat.len()],
            &flat,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "max err {}", r.max_rel_err);
    }

    #[test]
    fn lerp_stays_on_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = sample_unit_sphere(6, &mut rng);
        let b = sample_unit_sphere(6, &mut rng);
        for k in 0..=10 {
            let v = lerp_renorm(&a, &b, k as f64 / 10.0);
            assert!((unit_norm(&v) - 1.0).abs() < 1e-9);
        }
    }
}
