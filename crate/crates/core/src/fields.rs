//! Analytic fields on metric graphs used as Cauchy data and test functions.
//!
//! Everything here is at least C⁴ on each edge. The domain fields built by
//! [`DomainField`] have traces in a prescribed maximal isotropic subspace,
//! and all their higher endpoint derivatives vanish, so they lie in every
//! `H^n_M` the solver and the estimates need.

use crate::graph::{EdgeId, End, MetricGraph};

/// A real function on the graph, evaluated edge-wise.
pub trait GraphField: Sync {
    fn value(&self, e: EdgeId, x: f64) -> f64;
    /// `order`-th spatial derivative, when known.
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64>;
    /// Interior points of `e` where the field may lose smoothness.
    fn breakpoints(&self, _e: EdgeId) -> Vec<f64> {
        Vec::new()
    }
}

impl<F: GraphField + ?Sized> GraphField for &F {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        (**self).value(e, x)
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        (**self).derivative(e, x, order)
    }
    fn breakpoints(&self, e: EdgeId) -> Vec<f64> {
        (**self).breakpoints(e)
    }
}

/// The zero function.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl GraphField for Zero {
    fn value(&self, _: EdgeId, _: f64) -> f64 {
        0.0
    }
    fn derivative(&self, _: EdgeId, _: f64, _: usize) -> Option<f64> {
        Some(0.0)
    }
}

/// Derivatives of `(1 - r²)^5` up to order 4 with respect to `r`, for `|r| < 1`.
fn bump_profile(r: f64, order: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let s = 1.0 - r * r;
    match order {
        0 => s.powi(5),
        1 => -10.0 * r * s.powi(4),
        2 => s.powi(3) * (-10.0 * s + 80.0 * r * r),
        3 => s.powi(2) * (240.0 * r * s - 480.0 * r.powi(3)),
        4 => s * (240.0 * s * s - 2880.0 * r * r * s + 1920.0 * r.powi(4)),
        _ => f64::NAN,
    }
}

/// Compactly supported C⁴ bump `amp·(1 − ((x−c)/w)²)^5` on one edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub edge: EdgeId,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        let r = (x - self.center) / self.width;
        self.amplitude * bump_profile(r, order) / self.width.powi(order as i32)
    }
}

impl GraphField for Bump {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        if e == self.edge {
            self.eval(x, 0)
        } else {
            0.0
        }
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        if order > 4 {
            return None;
        }
        Some(if e == self.edge { self.eval(x, order) } else { 0.0 })
    }
    fn breakpoints(&self, e: EdgeId) -> Vec<f64> {
        if e == self.edge {
            vec![self.center - self.width, self.center + self.width]
        } else {
            Vec::new()
        }
    }
}

/// A bump transported along its edge: `f(x − speed·t)`.
#[derive(Clone, Copy, Debug)]
pub struct Shifted<F> {
    pub inner: F,
    pub shift: f64,
}

impl<F: GraphField> GraphField for Shifted<F> {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        self.inner.value(e, x - self.shift)
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        self.inner.derivative(e, x - self.shift, order)
    }
    fn breakpoints(&self, e: EdgeId) -> Vec<f64> {
        self.inner.breakpoints(e).into_iter().map(|b| b + self.shift).collect()
    }
}

/// `c·f`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: GraphField> GraphField for Scaled<F> {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        self.factor * self.inner.value(e, x)
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        self.inner.derivative(e, x, order).map(|d| self.factor * d)
    }
    fn breakpoints(&self, e: EdgeId) -> Vec<f64> {
        self.inner.breakpoints(e)
    }
}

/// The derivative of a field, `f^(order)`.
#[derive(Clone, Copy, Debug)]
pub struct Derivative<F> {
    pub inner: F,
    pub order: usize,
}

impl<F: GraphField> GraphField for Derivative<F> {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        self.inner.derivative(e, x, self.order).unwrap_or(f64::NAN)
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        self.inner.derivative(e, x, self.order + order)
    }
    fn breakpoints(&self, e: EdgeId) -> Vec<f64> {
        self.inner.breakpoints(e)
    }
}

/// Pointwise sum of fields.
#[derive(Default)]
pub struct Sum {
    pub terms: Vec<Box<dyn GraphField + Send>>,
}

impl Sum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, f: impl GraphField + Send + 'static) -> Self {
        self.terms.push(Box::new(f));
        self
    }
}

impl GraphField for Sum {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        self.terms.iter().map(|f| f.value(e, x)).sum()
    }
    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        let mut s = 0.0;
        for f in &self.terms {
            s += f.derivative(e, x, order)?;
        }
        Some(s)
    }
    fn breakpoints(&self, e: EdgeId) -> Vec<f64> {
        self.terms.iter().flat_map(|f| f.breakpoints(e)).collect()
    }
}

/// Degree-9 smootherstep derivative table: `χ(r) = 1 − S(r)` on `[0,1]`,
/// where `S` has vanishing derivatives of order 1..4 at both ends.
fn cutoff(r: f64, order: usize) -> f64 {
    if r >= 1.0 {
        return if order == 0 { 0.0 } else { 0.0 };
    }
    if r <= 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    // S(r) = 126r⁵ − 420r⁶ + 540r⁷ − 315r⁸ + 70r⁹
    const C: [f64; 5] = [126.0, -420.0, 540.0, -315.0, 70.0];
    let mut s = 0.0;
    for (k, &ck) in C.iter().enumerate() {
        let p = 5 + k as i32;
        if (order as i32) > p {
            continue;
        }
        let mut coef = ck;
        for j in 0..order as i32 {
            coef *= (p - j) as f64;
        }
        s += coef * r.powi(p - order as i32);
    }
    if order == 0 {
        1.0 - s
    } else {
        -s
    }
}

/// Endpoint germ `(v + d·s)·χ(s/w)` in the inward coordinate `s` of one slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndGerm {
    pub edge: EdgeId,
    pub end: End,
    pub value: f64,
    /// Inward derivative at the endpoint.
    pub slope: f64,
    pub width: f64,
}

impl EndGerm {
    /// Derivative of order `k` in the inward coordinate.
    fn in_s(&self, s: f64, k: usize) -> f64 {
        let w = self.width;
        let r = s / w;
        let lin = |j: usize| match j {
            0 => self.value + self.slope * s,
            1 => self.slope,
            _ => 0.0,
        };
        // Leibniz rule; the linear factor has only two nonzero derivatives.
        let mut out = lin(0) * cutoff(r, k) / w.powi(k as i32);
        if k >= 1 {
            out += k as f64 * lin(1) * cutoff(r, k - 1) / w.powi(k as i32 - 1);
        }
        out
    }
}

/// A field whose trace is a prescribed vector, built from endpoint germs,
/// plus optional interior bumps.
#[derive(Clone, Debug)]
pub struct DomainField {
    lengths: Vec<f64>,
    germs: Vec<EndGerm>,
    bumps: Vec<Bump>,
}

impl DomainField {
    /// `values` and `slopes` are indexed by trace slot (see
    /// [`crate::vertex::TraceLayout`]); slopes are inward derivatives, so
    /// they coincide with the ψ̲′ block of the trace.
    pub fn from_trace(g: &MetricGraph, values: &[f64], slopes: &[f64], width: f64) -> Self {
        let layout = crate::vertex::TraceLayout::of(g);
        let mut germs = Vec::new();
        for e in g.edge_ids() {
            let a = g.length(e);
            let w = width.min(0.45 * a);
            for end in [End::Initial, End::Final] {
                if g.edge(e).vertex_at(end).is_none() {
                    continue;
                }
                let s = layout.slot(e, end);
                germs.push(EndGerm {
                    edge: e,
                    end,
                    value: values[s],
                    slope: slopes[s],
                    width: w,
                });
            }
        }
        DomainField {
            lengths: g.edges().iter().map(|e| e.length).collect(),
            germs,
            bumps: Vec::new(),
        }
    }

    pub fn with_bump(mut self, b: Bump) -> Self {
        self.bumps.push(b);
        self
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    /// Distance from each end at which the germs vanish.
    pub fn germ_width(&self, e: EdgeId) -> f64 {
        self.germs
            .iter()
            .filter(|g| g.edge == e)
            .map(|g| g.width)
            .fold(0.0, f64::max)
    }
}

impl GraphField for DomainField {
    fn value(&self, e: EdgeId, x: f64) -> f64 {
        self.derivative(e, x, 0).unwrap()
    }

    fn derivative(&self, e: EdgeId, x: f64, order: usize) -> Option<f64> {
        if order > 4 {
            return None;
        }
        let a = self.lengths[e.0];
        let mut out = 0.0;
        for germ in self.germs.iter().filter(|g| g.edge == e) {
            match germ.end {
                End::Initial => out += germ.in_s(x, order),
                End::Final => {
                    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                    out += sign * germ.in_s(a - x, order);
                }
            }
        }
        for b in &self.bumps {
            out += b.derivative(e, x, order).unwrap();
        }
        Some(out)
    }

    fn breakpoints(&self, e: EdgeId) -> Vec<f64> {
        let a = self.lengths[e.0];
        let mut out: Vec<f64> = Vec::new();
        for germ in self.germs.iter().filter(|g| g.edge == e) {
            out.push(match germ.end {
                End::Initial => germ.width,
                End::Final => a - germ.width,
            });
        }
        for b in self.bumps.iter() {
            out.extend(b.breakpoints(e));
        }
        out
    }
}

/// Random real Cauchy data in the domain of a real spec, supported near
/// vertices and on interior bumps.
pub mod random {
    use super::*;
    use crate::vertex::ValidatedSpec;
    use rand::Rng;

    /// A random domain field whose trace lies in `M(A,B)`.
    pub fn domain_field<R: Rng>(
        rng: &mut R,
        g: &MetricGraph,
        spec: &ValidatedSpec,
        width: f64,
        n_bumps: usize,
        ext_extent: f64,
    ) -> DomainField {
        let tr = spec.random_real_trace(rng);
        let n = spec.dim();
        let mut f = DomainField::from_trace(g, &tr[..n], &tr[n..], width);
        for _ in 0..n_bumps {
            let e = EdgeId(rng.gen_range(0..g.edge_count()));
            let a = g.length(e).min(ext_extent);
            let w0 = f.germ_width(e);
            let lo = w0;
            let hi = if g.edge(e).is_external() { a } else { a - w0 };
            if hi - lo < 1e-3 {
                continue;
            }
            let width = rng.gen_range(0.1..0.5) * (hi - lo) / 2.0;
            let center = rng.gen_range(lo + width..hi - width);
            f = f.with_bump(Bump {
                edge: e,
                center,
                width,
                amplitude: rng.gen_range(-1.0..1.0),
            });
        }
        f
    }
}
