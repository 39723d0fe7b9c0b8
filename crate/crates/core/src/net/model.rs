//! Feed-forward acoustic model: affine+ReLU hidden layers with LHUC hooks,
//! then two independent affine heads (LF-MMI and CE) on the last hidden
//! layer. Forward and backward passes are written out by hand.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::lhuc::{lhuc_scale, lhuc_scale_grad, LhucParams};
use crate::error::{Error, Result};
use crate::inference::FrameScores;

/// `y = x W + b` with `W` stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`; zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("valid bound");
        Self {
            weight: Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub pdf_count: usize,
}

impl NetConfig {
    pub fn new(input_dim: usize, hidden: Vec<usize>, pdf_count: usize) -> Self {
        Self {
            input_dim,
            hidden,
            pdf_count,
        }
    }
}

/// Network parameters. The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticNet {
    pub hidden: Vec<Affine>,
    pub lfmmi_head: Affine,
    pub ce_head: Affine,
}

/// Gradients with respect to network parameters.
pub type NetGrads = AcousticNet;

/// Which parameter class a flattened component belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
}

impl AcousticNet {
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Result<Self> {
        if cfg.input_dim == 0 || cfg.pdf_count == 0 || cfg.hidden.is_empty() || cfg.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("degenerate network config {cfg:?}")));
        }
        let mut hidden = Vec::with_capacity(cfg.hidden.len());
        let mut fan_in = cfg.input_dim;
        for &w in &cfg.hidden {
            hidden.push(Affine::glorot(fan_in, w, rng));
            fan_in = w;
        }
        Ok(Self {
            lfmmi_head: Affine::glorot(fan_in, cfg.pdf_count, rng),
            ce_head: Affine::glorot(fan_in, cfg.pdf_count, rng),
            hidden,
        })
    }

    pub fn config(&self) -> NetConfig {
        NetConfig {
            input_dim: self.input_dim(),
            hidden: self.widths(),
            pdf_count: self.pdf_count(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden[0].fan_in()
    }

    pub fn pdf_count(&self) -> usize {
        self.lfmmi_head.fan_out()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.hidden.iter().map(Affine::fan_out).collect()
    }

    pub fn zeros_like(&self) -> NetGrads {
        Self {
            hidden: self.hidden.iter().map(|l| Affine::zeros(l.fan_in(), l.fan_out())).collect(),
            lfmmi_head: Affine::zeros(self.lfmmi_head.fan_in(), self.lfmmi_head.fan_out()),
            ce_head: Affine::zeros(self.ce_head.fan_in(), self.ce_head.fan_out()),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Affine> {
        self.hidden.iter().chain([&self.lfmmi_head, &self.ce_head])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Affine> {
        self.hidden
            .iter_mut()
            .chain([&mut self.lfmmi_head, &mut self.ce_head])
    }

    /// Visits every scalar parameter in a fixed order.
    pub fn for_each_param(&self, mut f: impl FnMut(ParamKind, f64)) {
        for l in self.layers() {
            l.weight.iter().for_each(|&v| f(ParamKind::Weight, v));
            l.bias.iter().for_each(|&v| f(ParamKind::Bias, v));
        }
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(ParamKind, &mut f64)) {
        for l in self.layers_mut() {
            l.weight.iter_mut().for_each(|v| f(ParamKind::Weight, v));
            l.bias.iter_mut().for_each(|v| f(ParamKind::Bias, v));
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.for_each_param(|_, v| out.push(v));
        out
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut out = Vec::with_capacity(self.num_params());
        self.for_each_param(|k, _| out.push(k));
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        self.for_each_param_mut(|_, v| *v = *it.next().expect("flat parameter vector too short"));
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &NetGrads, alpha: f64) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight.scaled_add(alpha, &b.weight);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }

    /// Order-independent content checksum (bit patterns of every parameter).
    pub fn checksum(&self) -> u64 {
        let mut h = crc32fast::Hasher::new();
        self.for_each_param(|_, v| h.update(&v.to_le_bytes()));
        let lo = h.finalize() as u64;
        let mut h2 = crc32fast::Hasher::new_with_initial(0x9e37_79b9);
        self.for_each_param(|_, v| h2.update(&v.to_le_bytes()));
        (u64::from(h2.finalize()) << 32) | lo
    }
}

/// Activations cached by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct GradientTape {
    /// Input to each hidden layer (the features for layer 0).
    inputs: Vec<Array2<f64>>,
    /// ReLU pre-activations.
    pre: Vec<Array2<f64>>,
    /// Unscaled ReLU outputs `h`.
    relu: Vec<Array2<f64>>,
    /// LHUC `(r, xi(r))` for hooked layers.
    lhuc: Vec<Option<(Array1<f64>, Array1<f64>)>>,
    /// Last hidden layer output (after scaling), input to both heads.
    top: Array2<f64>,
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct NetOutput {
    /// LF-MMI head, pre-softmax.
    pub lfmmi: Array2<f64>,
    /// CE head, pre-softmax.
    pub ce: Array2<f64>,
    pub tape: GradientTape,
}

impl NetOutput {
    pub fn lfmmi_scores(&self) -> Result<FrameScores> {
        FrameScores::new(self.lfmmi.clone())
    }

    pub fn ce_scores(&self) -> Result<FrameScores> {
        FrameScores::new(self.ce.clone())
    }
}

/// Runs the network on a `frames x input_dim` feature matrix. Hooked layers
/// compute `h = xi(r) * relu(x W + b)`.
pub fn forward(net: &AcousticNet, features: &Array2<f64>, lhuc: Option<&LhucParams>) -> Result<NetOutput> {
    if features.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "feature dimension",
            expected: net.input_dim(),
            got: features.ncols(),
        });
    }
    if features.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(p) = lhuc {
        if p.layers.len() != net.hidden.len() {
            return Err(Error::DimensionMismatch {
                what: "LHUC layer count",
                expected: net.hidden.len(),
                got: p.layers.len(),
            });
        }
        for (r, layer) in p.layers.iter().zip(&net.hidden) {
            if let Some(r) = r {
                if r.len() != layer.fan_out() {
                    return Err(Error::DimensionMismatch {
                        what: "LHUC vector width",
                        expected: layer.fan_out(),
                        got: r.len(),
                    });
                }
            }
        }
    }
    let n = net.hidden.len();
    let mut inputs = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let mut relu = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut x = features.to_owned();
    for (i, layer) in net.hidden.iter().enumerate() {
        let z = layer.apply(&x);
        let h = z.mapv(|v| v.max(0.0));
        let hook = lhuc.and_then(|p| p.layers[i].as_ref());
        let out = match hook {
            Some(r) => {
                let xi = r.mapv(lhuc_scale);
                let scaled = &h * &xi;
                scales.push(Some((r.clone(), xi)));
                scaled
            }
            None => {
                scales.push(None);
                h.clone()
            }
        };
        inputs.push(std::mem::replace(&mut x, out));
        pre.push(z);
        relu.push(h);
    }
    let lfmmi = net.lfmmi_head.apply(&x);
    let ce = net.ce_head.apply(&x);
    Ok(NetOutput {
        lfmmi,
        ce,
        tape: GradientTape {
            inputs,
            pre,
            relu,
            lhuc: scales,
            top: x,
        },
    })
}

/// Parameter classes a backward pass should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradRequest {
    pub net: bool,
    pub lhuc: bool,
}

impl GradRequest {
    pub const NET: Self = Self { net: true, lhuc: false };
    pub const LHUC: Self = Self { net: false, lhuc: true };
    pub const BOTH: Self = Self { net: true, lhuc: true };
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub net: Option<NetGrads>,
    /// Gradient with respect to `r` on each hooked layer.
    pub lhuc: Option<LhucParams>,
}

impl GradientTape {
    pub fn frames(&self) -> usize {
        self.top.nrows()
    }

    /// Backpropagates head gradients (`d loss / d head output`, frames x
    /// pdfs; `None` means zero). Consumes the tape.
    pub fn backward(
        self,
        net: &AcousticNet,
        lfmmi_grad: Option<&Array2<f64>>,
        ce_grad: Option<&Array2<f64>>,
        request: GradRequest,
    ) -> Result<Gradients> {
        let shape = (self.frames(), net.pdf_count());
        for g in [lfmmi_grad, ce_grad].into_iter().flatten() {
            if g.dim() != shape {
                return Err(Error::DimensionMismatch {
                    what: "head gradient shape",
                    expected: shape.0 * shape.1,
                    got: g.len(),
                });
            }
        }
        let mut grads = request.net.then(|| net.zeros_like());
        let mut lhuc_grads = request.lhuc.then(|| LhucParams {
            layers: self.lhuc.iter().map(|l| l.as_ref().map(|(r, _)| Array1::zeros(r.len()))).collect(),
        });

        let mut d_top = Array2::<f64>::zeros((self.frames(), self.top.ncols()));
        for (g, head, slot) in [
            (lfmmi_grad, &net.lfmmi_head, 0usize),
            (ce_grad, &net.ce_head, 1usize),
        ] {
            let Some(g) = g else { continue };
            if let Some(grads) = grads.as_mut() {
                let target = if slot == 0 { &mut grads.lfmmi_head } else { &mut grads.ce_head };
                target.weight = self.top.t().dot(g);
                target.bias = g.sum_axis(Axis(0));
            }
            d_top = d_top + g.dot(&head.weight.t());
        }

        let mut d_out = d_top;
        for i in (0..net.hidden.len()).rev() {
            let d_relu = match &self.lhuc[i] {
                Some((r, xi)) => {
                    if let Some(lg) = lhuc_grads.as_mut() {
                        let dscale = (&d_out * &self.relu[i]).sum_axis(Axis(0));
                        let dr = dscale * &r.mapv(lhuc_scale_grad);
                        lg.layers[i] = Some(dr);
                    }
                    &d_out * xi
                }
                None => d_out,
            };
            let mut dz = d_relu;
            dz.zip_mut_with(&self.pre[i], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            if let Some(grads) = grads.as_mut() {
                grads.hidden[i].weight = self.inputs[i].t().dot(&dz);
                grads.hidden[i].bias = dz.sum_axis(Axis(0));
            }
            if i == 0 {
                break;
            }
            let needs_lower = request.net || self.lhuc[..i].iter().any(Option::is_some);
            if !needs_lower {
                break;
            }
            d_out = dz.dot(&net.hidden[i].weight.t());
        }
        Ok(Gradients {
            net: grads,
            lhuc: lhuc_grads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::Array2;
    use rand_distr::StandardNormal;

    fn setup(seed: u64) -> (AcousticNet, Array2<f64>) {
        let mut r = stream(seed, "test", &[]);
        let net = AcousticNet::new(&NetConfig::new(4, vec![6, 5, 6], 7), &mut r).unwrap();
        let x = Array2::from_shape_fn((5, 4), |_| r.sample::<f64, _>(StandardNormal));
        (net, x)
    }

    #[test]
    fn identity_adapter_is_bit_equal() {
        let (net, x) = setup(1);
        let si = forward(&net, &x, None).unwrap();
        let id = LhucParams::identity(&net.widths(), &[0, 1, 2]);
        let ad = forward(&net, &x, Some(&id)).unwrap();
        assert_eq!(si.lfmmi, ad.lfmmi);
        assert_eq!(si.ce, ad.ce);
        let again = forward(&net, &x, None).unwrap();
        assert_eq!(si.lfmmi, again.lfmmi);
    }

    #[test]
    fn strongly_negative_r_silences_layer() {
        let (net, x) = setup(2);
        let mut p = LhucParams::identity(&net.widths(), &[1]);
        p.layers[1] = Some(Array1::from_elem(5, -800.0));
        let a = forward(&net, &x, Some(&p)).unwrap();
        // every frame now sees the same head inputs
        for row in a.lfmmi.rows() {
            for (u, v) in row.iter().zip(a.lfmmi.row(0).iter()) {
                assert_eq!(u, v);
            }
        }
    }

    #[test]
    fn dimension_checks() {
        let (net, x) = setup(3);
        assert!(matches!(
            forward(&net, &Array2::zeros((2, 3)), None),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = LhucParams::identity(&[6, 4, 6], &[1]);
        assert!(forward(&net, &x, Some(&bad)).is_err());
        let out = forward(&net, &x, None).unwrap();
        assert!(out.tape.backward(&net, Some(&Array2::zeros((5, 3))), None, GradRequest::NET).is_err());
    }

    #[test]
    fn zero_head_grads_give_zero_gradients() {
        let (net, x) = setup(4);
        let p = LhucParams::identity(&net.widths(), &[0, 2]);
        let out = forward(&net, &x, Some(&p)).unwrap();
        let z = Array2::zeros((5, 7));
        let g = out.tape.backward(&net, Some(&z), Some(&z), GradRequest::BOTH).unwrap();
        assert!(g.net.unwrap().to_flat().iter().all(|&v| v == 0.0));
        assert!(g.lhuc.unwrap().to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_units_get_zero_lhuc_gradient() {
        let (mut net, x) = setup(5);
        // unit 2 of layer 0 never fires
        net.hidden[0].weight.column_mut(2).fill(0.0);
        net.hidden[0].bias[2] = -1.0;
        let p = LhucParams::identity(&net.widths(), &[0]);
        let out = forward(&net, &x, Some(&p)).unwrap();
        let g = Array2::from_elem((5, 7), 0.3);
        let grads = out.tape.backward(&net, Some(&g), Some(&g), GradRequest::LHUC).unwrap();
        assert!(grads.net.is_none());
        assert_eq!(grads.lhuc.unwrap().layers[0].as_ref().unwrap()[2], 0.0);
    }

    #[test]
    fn head_gradients_are_independent() {
        let (net, x) = setup(6);
        let mut r = stream(9, "g", &[]);
        let g1 = Array2::from_shape_fn((5, 7), |_| r.sample::<f64, _>(StandardNormal));
        let g2 = Array2::from_shape_fn((5, 7), |_| r.sample::<f64, _>(StandardNormal));
        let both = forward(&net, &x, None).unwrap().tape.backward(&net, Some(&g1), Some(&g2), GradRequest::NET).unwrap();
        let only1 = forward(&net, &x, None).unwrap().tape.backward(&net, Some(&g1), None, GradRequest::NET).unwrap();
        let only2 = forward(&net, &x, None).unwrap().tape.backward(&net, None, Some(&g2), GradRequest::NET).unwrap();
        let (b, o1, o2) = (both.net.unwrap(), only1.net.unwrap(), only2.net.unwrap());
        assert_eq!(b.lfmmi_head, o1.lfmmi_head);
        assert_eq!(b.ce_head, o2.ce_head);
        assert!(o1.ce_head.weight.iter().all(|&v| v == 0.0));
        assert!(o2.lfmmi_head.weight.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_round_trip_and_checksum() {
        let (net, _) = setup(7);
        let mut other = net.zeros_like();
        other.set_flat(&net.to_flat());
        assert_eq!(other, net);
        assert_eq!(other.checksum(), net.checksum());
        other.hidden[0].bias[0] += 1e-12;
        assert_ne!(other.checksum(), net.checksum());
        assert_eq!(net.param_kinds().len(), net.num_params());
    }
}
