//! Network building blocks: named parameters, plain and style-modulated
//! fully connected layers, and an im2col-backed convolution.
//!
//! Parameters live outside any graph as plain buffers. Each training step
//! binds them into a fresh [`Graph`] as leaves; optimizers walk the
//! name → buffer mapping and look gradients up by the bound leaf.

use crate::error::{Error, Result};
use crate::tensor::{Graph, PadMode, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named, persistently stored weight buffer.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "param shape/value mismatch"
        );
        Param {
            name: name.into(),
            shape: shape.to_vec(),
            values,
        }
    }

    /// Gaussian init with std 1/sqrt(fan_in).
    pub fn normal(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| normal_draw(rng) * std).collect();
        Param::new(name, shape, values)
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Param::new(name, shape, vec![0.0; n])
    }

    pub fn full(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        let n: usize = shape.iter().product();
        Param::new(name, shape, vec![v; n])
    }

    pub fn bind(&self, g: &Graph) -> Result<Tensor> {
        g.leaf(&self.shape, &self.values, true)
    }
}

/// Standard-normal draw via Box–Muller on the raw uniform stream. Kept
/// in-house so the value sequence is pinned by the rng stream alone.
pub fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Binds parameters into a graph, recording (name, leaf) pairs so the
/// optimizer can route gradients back to the stored buffers. A frozen
/// binder creates non-differentiable leaves and records nothing.
pub struct Binder<'g> {
    graph: &'g Graph,
    trainable: bool,
    pub leaves: Vec<(String, Tensor)>,
}

impl<'g> Binder<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        Binder {
            graph,
            trainable: true,
            leaves: Vec::new(),
        }
    }

    pub fn frozen(graph: &'g Graph) -> Self {
        Binder {
            graph,
            trainable: false,
            leaves: Vec::new(),
        }
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn param(&mut self, p: &Param) -> Result<Tensor> {
        let t = self.graph.leaf(&p.shape, &p.values, self.trainable)?;
        if self.trainable {
            self.leaves.push((p.name.clone(), t.clone()));
        }
        Ok(t)
    }
}

/// Fully connected layer; weight stored [in, out] so `x.matmul(w)` maps
/// row vectors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn init(prefix: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Param::normal(format!("{prefix}.w"), &[fan_in, fan_out], fan_in, rng),
            b: Param::zeros(format!("{prefix}.b"), &[fan_out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundLinear> {
        Ok(BoundLinear {
            w: b.param(&self.w)?,
            b: b.param(&self.b)?,
        })
    }
}

#[derive(Clone)]
pub struct BoundLinear {
    pub w: Tensor,
    pub b: Tensor,
}

impl BoundLinear {
    /// x: [.., in] → [.., out]
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.w)?.add(&self.b)
    }
}

/// Style-modulated fully connected layer.
///
/// A small affine of the style vector produces a per-input-channel scale
/// `s`; the effective weight is `w · diag(s)` renormalized per output
/// unit (demodulation), which makes the output invariant to the overall
/// scale of `s`.
#[derive(Debug, Clone)]
pub struct ModLinear {
    pub w: Param,
    pub b: Param,
    pub style: Linear,
}

pub const DEMOD_EPS: f64 = 1e-8;

impl ModLinear {
    pub fn init(
        prefix: &str,
        style_dim: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut style = Linear::init(&format!("{prefix}.style"), style_dim, fan_in, rng);
        // Bias 1 so the scale pattern starts near identity.
        style.b = Param::full(format!("{prefix}.style.b"), &[fan_in], 1.0);
        ModLinear {
            w: Param::normal(format!("{prefix}.w"), &[fan_in, fan_out], fan_in, rng),
            b: Param::zeros(format!("{prefix}.b"), &[fan_out]),
            style,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.w, &self.b];
        p.extend(self.style.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.w, &mut self.b];
        p.extend(self.style.params_mut());
        p
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundModLinear> {
        Ok(BoundModLinear {
            w: b.param(&self.w)?,
            b: b.param(&self.b)?,
            style: self.style.bind(b)?,
        })
    }
}

#[derive(Clone)]
pub struct BoundModLinear {
    pub w: Tensor,
    pub b: Tensor,
    pub style: BoundLinear,
}

impl BoundModLinear {
    /// Modulated weight for one style vector `w_style` of shape [1, D_w]:
    /// returns the demodulated [in, out] matrix.
    pub fn modulated_weight(&self, w_style: &Tensor) -> Result<Tensor> {
        let in_dim = self.w.shape()[0];
        let s = self.style.apply(w_style)?.reshape(&[in_dim, 1])?;
        let scaled = self.w.mul(&s)?;
        // Per-output-unit norm over input channels.
        let norm2 = scaled.mul(&scaled)?.sum_axes(&[0])?.add_scalar(DEMOD_EPS)?;
        let demod = norm2.sqrt()?;
        scaled.div(&demod)
    }

    /// x: [N, in], one shared style vector [1, D_w] → [N, out]
    pub fn apply(&self, x: &Tensor, w_style: &Tensor) -> Result<Tensor> {
        let w_eff = self.modulated_weight(w_style)?;
        x.matmul(&w_eff)?.add(&self.b)
    }
}

/// Multi-layer perceptron with leaky-relu between layers (not after the
/// last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub slope: f64,
}

impl Mlp {
    pub fn init(prefix: &str, dims: &[usize], slope: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2);
        let layers = (0..dims.len() - 1)
            .map(|i| Linear::init(&format!("{prefix}.fc{i}"), dims[i], dims[i + 1], rng))
            .collect();
        Mlp { layers, slope }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundMlp> {
        Ok(BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| l.bind(b))
                .collect::<Result<_>>()?,
            slope: self.slope,
        })
    }
}

pub struct BoundMlp {
    pub layers: Vec<BoundLinear>,
    pub slope: f64,
}

impl BoundMlp {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h)?;
            if i + 1 < self.layers.len() {
                h = h.leaky_relu(self.slope)?;
            }
        }
        Ok(h)
    }
}

/// 2D convolution via im2col; weight stored [C_in·kh·kw, C_out].
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub pad_mode: PadMode,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        pad_mode: PadMode,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Conv2d {
            w: Param::normal(format!("{prefix}.w"), &[fan_in, out_ch], fan_in, rng),
            b: Param::zeros(format!("{prefix}.b"), &[out_ch]),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            pad_mode,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn bind(&self, b: &mut Binder) -> Result<BoundConv2d> {
        Ok(BoundConv2d {
            w: b.param(&self.w)?,
            b: b.param(&self.b)?,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            pad_mode: self.pad_mode,
        })
    }
}

pub struct BoundConv2d {
    pub w: Tensor,
    pub b: Tensor,
    kernel: usize,
    stride: usize,
    pad: usize,
    pad_mode: PadMode,
}

impl BoundConv2d {
    /// x: [B, C_in, H, W] → [B, C_out, oh, ow]
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (batch, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        if x.shape()[1] * self.kernel * self.kernel != self.w.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                details: format!(
                    "input channels {} incompatible with weight {:?}",
                    x.shape()[1],
                    self.w.shape()
                ),
            });
        }
        let oh = (h + 2 * self.pad - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.pad - self.kernel) / self.stride + 1;
        let cols = x.im2col(self.kernel, self.kernel, self.stride, self.pad, self.pad_mode)?;
        let y = cols.matmul(&self.w)?.add(&self.b)?; // [B, P, C_out]
        let out_ch = self.w.shape()[1];
        y.transpose()?.reshape(&[batch, out_ch, oh, ow])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;

    #[test]
    fn linear_shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l = Linear::init("t", 4, 3, &mut rng);
        let g = Graph::new();
        let bl = l.bind(&mut Binder::new(&g)).unwrap();
        let x = g.constant(&[2, 4], &[0.1; 8]).unwrap();
        let y1 = bl.apply(&x).unwrap();
        let y2 = bl.apply(&x).unwrap();
        assert_eq!(y1.shape(), &[2, 3]);
        assert_eq!(y1.values(), y2.values());
    }

    #[test]
    fn demodulation_of_unit_rows_with_unit_scale_is_identity() {
        // s ≡ 1 and unit-norm incoming weights per output unit: the
        // modulated apply must match the plain affine.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ml = ModLinear::init("t", 2, 3, 2, &mut rng);
        for v in ml.style.w.values.iter_mut() {
            *v = 0.0; // style affine now outputs exactly its bias (1)
        }
        for o in 0..2 {
            let mut n2 = 0.0;
            for i in 0..3 {
                n2 += ml.w.values[i * 2 + o] * ml.w.values[i * 2 + o];
            }
            let n = n2.sqrt();
            for i in 0..3 {
                ml.w.values[i * 2 + o] /= n;
            }
        }
        let g = Graph::new();
        let b = ml.bind(&mut Binder::new(&g)).unwrap();
        let style = g.constant(&[1, 2], &[0.4, -0.7]).unwrap();
        let x = g.constant(&[1, 3], &[0.3, -1.0, 2.0]).unwrap();
        let modded = b.apply(&x, &style).unwrap();
        let plain = x.matmul(&b.w).unwrap().add(&b.b).unwrap();
        for (a, c) in modded.values().iter().zip(plain.values()) {
            assert!((a - c).abs() < 1e-7, "{a} vs {c}");
        }
    }

    #[test]
    fn demodulation_cancels_scale_of_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ml = ModLinear::init("t", 4, 5, 3, &mut rng);
        let g = Graph::new();
        let b = ml.bind(&mut Binder::new(&g)).unwrap();
        let style = g.constant(&[1, 4], &[0.2, -0.3, 1.1, 0.9]).unwrap();
        let x = g
            .constant(
                &[2, 5],
                &[0.5, -0.2, 0.8, 1.0, -1.5, 0.1, 0.2, 0.3, 0.4, 0.5],
            )
            .unwrap();

        let y1 = b.apply(&x, &style).unwrap();

        // Scale the style affine (weights and bias) by 37; demodulation
        // must cancel it.
        let mut ml2 = ml.clone();
        for v in ml2.style.w.values.iter_mut() {
            *v *= 37.0;
        }
        for v in ml2.style.b.values.iter_mut() {
            *v *= 37.0;
        }
        let b2 = ml2.bind(&mut Binder::new(&g)).unwrap();
        let y2 = b2.apply(&x, &style).unwrap();
        for (a, c) in y1.values().iter().zip(y2.values()) {
            assert!((a - c).abs() < 1e-6, "{a} vs {c}");
        }
    }

    #[test]
    fn grad_check_two_stacked_modulated_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l1 = ModLinear::init("a", 3, 4, 4, &mut rng);
        let l2 = ModLinear::init("b", 3, 4, 2, &mut rng);
        let x0: Vec<f64> = (0..4).map(|i| 0.3 * i as f64 - 0.5).collect();

        let r = grad_check(
            |g, x| {
                let mut binder = Binder::new(g);
                let b1 = l1.bind(&mut binder)?;
                let b2 = l2.bind(&mut binder)?;
                let style = g.constant(&[1, 3], &[0.3, -0.2, 0.8])?;
                let h = b1.apply(&x.reshape(&[1, 4])?, &style)?.leaky_relu(0.2)?;
                b2.apply(&h, &style)?.sum_all()
            },
            &[4],
            &x0,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "max err {}", r.max_rel_err);
    }

    #[test]
    fn conv2d_shapes_and_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let conv = Conv2d::init("c", 2, 3, 3, 2, 1, PadMode::Zero, &mut rng);
        let x0: Vec<f64> = (0..2 * 4 * 4).map(|i| (i as f64) * 0.07 - 1.0).collect();
        let r = grad_check(
            |g, x| {
                let b = conv.bind(&mut Binder::new(g))?;
                b.apply(&x.reshape(&[1, 2, 4, 4])?)?.sum_all()
            },
            &[32],
            &x0,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-6, "max err {}", r.max_rel_err);

        let g = Graph::new();
        let b = conv.bind(&mut Binder::new(&g)).unwrap();
        let x = g.constant(&[1, 2, 4, 4], &x0).unwrap();
        assert_eq!(b.apply(&x).unwrap().shape(), &[1, 3, 2, 2]);
    }
}
