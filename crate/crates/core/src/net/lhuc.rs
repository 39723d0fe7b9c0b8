use ndarray::Array1;

/// LHUC amplitude `2 * logistic(r)`, strictly inside (0, 2).
#[inline]
pub fn lhuc_scale(r: f64) -> f64 {
    2.0 * logistic(r)
}

/// Derivative of [`lhuc_scale`] with respect to `r`.
#[inline]
pub fn lhuc_scale_grad(r: f64) -> f64 {
    let s = logistic(r);
    2.0 * s * (1.0 - s)
}

#[inline]
fn logistic(r: f64) -> f64 {
    if r >= 0.0 {
        1.0 / (1.0 + (-r).exp())
    } else {
        let e = r.exp();
        e / (1.0 + e)
    }
}

/// Per-layer LHUC parameters `r`; `None` for layers without a hook.
#[derive(Debug, Clone, PartialEq)]
pub struct LhucParams {
    pub layers: Vec<Option<Array1<f64>>>,
}

impl LhucParams {
    /// `r = 0` (unit scale) on the hooked layers.
    pub fn identity(widths: &[usize], hooked: &[usize]) -> Self {
        Self {
            layers: widths
                .iter()
                .enumerate()
                .map(|(i, &w)| hooked.contains(&i).then(|| Array1::zeros(w)))
                .collect(),
        }
    }

    pub fn hooked_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_ref().map(|_| i))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.layers.iter().flatten().map(|r| r.len()).sum()
    }

    /// Hooked components concatenated in layer order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flatten().flat_map(|r| r.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for r in self.layers.iter_mut().flatten() {
            for v in r.iter_mut() {
                *v = *it.next().expect("flat LHUC vector too short");
            }
        }
    }

    /// Same layout with every component replaced by `f(component)`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| l.as_ref().map(|r| r.mapv(&mut f)))
                .collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers.iter().flatten().map(|r| r.dot(r)).sum::<f64>().sqrt()
    }
}
