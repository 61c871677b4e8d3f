//! Adaptive Dormand–Prince 5(4) integrator with dense output, projection
//! hooks, breakpoint handling and finite-escape (blow-up) detection.

use crate::scalar::{finite, lit, Real};

/// Which one-sided limit a right-hand side should use at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A first-order system `y′ = f(t, y)`.
pub trait System<T: Real> {
    fn dim(&self) -> usize;

    /// Evaluates `f(t, y)` into `dy`. `side` selects the one-sided limit of
    /// piecewise data when `t` sits exactly on a breakpoint.
    fn rhs(&self, t: T, y: &[T], dy: &mut [T], side: Side);

    /// Applied to every accepted state (e.g. symmetrization).
    fn project(&self, _t: T, _y: &mut [T]) {}

    /// Norm watched by the blow-up detector; `None` disables detection.
    fn escape_norm(&self, _y: &[T]) -> Option<T> {
        None
    }

    /// Times where the data is non-smooth; steps never straddle them.
    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Steps shorter than `h_min_rel · max(1, |t|)` count as underflow.
    pub h_min_rel: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// `‖y‖` above this value triggers the blow-up protocol.
    pub escape_threshold: f64,
    /// Target width of the blow-up bracket.
    pub bracket_width: f64,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
            h_init: None,
            h_min_rel: 1e-14,
            h_max: 0.1,
            max_steps: 500_000,
            escape_threshold: 1e8,
            bracket_width: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination<T> {
    /// Reached the requested end time.
    Completed,
    /// Finite escape time bracketed in `[lower, upper]`; `t_star` is the midpoint.
    BlowUp { t_star: T, lower: T, upper: T },
    /// The step size underflowed while the solution stayed bounded.
    StiffFailure { t: T, h: T },
    /// The step budget ran out.
    MaxSteps { t: T },
}

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone)]
pub struct Step<T> {
    pub t0: T,
    /// Step size the continuous extension was built with. `t0 + h` may differ
    /// from [`Step::t1`] by rounding.
    pub h: T,
    /// Accepted (projected) state at `t1`.
    pub y1: Vec<T>,
    t1: T,
    cont: [Vec<T>; 5],
}

impl<T: Real> Step<T> {
    pub fn t1(&self) -> T {
        self.t1
    }

    fn theta(&self, t: T) -> T {
        (t - self.t0) / self.h
    }

    pub fn eval(&self, t: T, out: &mut [T]) {
        let th = self.theta(t);
        let th1 = T::one() - th;
        let [r1, r2, r3, r4, r5] = &self.cont;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn eval_derivative(&self, t: T, out: &mut [T]) {
        self.derivative_at_theta(self.theta(t), out);
    }

    /// Derivative at `t0 + h` with `θ = 1` exactly; this is the final stage
    /// `f(t1, y1)` before projection. Short steps near a blow-up would lose
    /// digits recomputing `θ` from `t1`.
    pub fn end_derivative(&self, out: &mut [T]) {
        self.derivative_at_theta(T::one(), out);
    }

    fn derivative_at_theta(&self, th: T, out: &mut [T]) {
        let th1 = T::one() - th;
        let [_, r2, r3, r4, r5] = &self.cont;
        for i in 0..out.len() {
            let a = r4[i] + th1 * r5[i];
            let da = -r5[i];
            let b = r3[i] + th * a;
            let db = a + th * da;
            let c = r2[i] + th1 * b;
            let dc = -b + th1 * db;
            out[i] = (c + th * dc) / self.h;
        }
    }
}

/// Output of [`integrate`].
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub t0: T,
    pub y0: Vec<T>,
    pub steps: Vec<Step<T>>,
    pub termination: Termination<T>,
    pub rejected: usize,
}

impl<T: Real> Solution<T> {
    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    /// Last time covered by the dense output.
    pub fn t_last(&self) -> T {
        self.steps.last().map_or(self.t0, |s| s.t1())
    }

    /// Sample times: the start and every accepted step end.
    pub fn times(&self) -> Vec<T> {
        std::iter::once(self.t0).chain(self.steps.iter().map(|s| s.t1())).collect()
    }

    /// Sampled states aligned with [`times`](Self::times).
    pub fn states(&self) -> impl Iterator<Item = (T, &[T])> {
        std::iter::once((self.t0, self.y0.as_slice())).chain(self.steps.iter().map(|s| (s.t1(), s.y1.as_slice())))
    }

    fn locate(&self, t: T) -> Option<&Step<T>> {
        if t < self.t0 || t > self.t_last() || self.steps.is_empty() {
            return None;
        }
        let idx = self.steps.partition_point(|s| s.t1() < t);
        self.steps.get(idx.min(self.steps.len() - 1))
    }

    /// Dense-output value at `t`; `None` outside the covered interval.
    pub fn eval(&self, t: T) -> Option<Vec<T>> {
        if t == self.t0 {
            return Some(self.y0.clone());
        }
        let step = self.locate(t)?;
        if t == step.t1() {
            return Some(step.y1.clone());
        }
        let mut out = vec![T::zero(); self.dim()];
        step.eval(t, &mut out);
        Some(out)
    }

    /// Derivative of the dense output at `t`.
    pub fn eval_derivative(&self, t: T) -> Option<Vec<T>> {
        let step = self.locate(t)?;
        let mut out = vec![T::zero(); self.dim()];
        step.eval_derivative(t, &mut out);
        Some(out)
    }

    pub fn blew_up(&self) -> bool {
        matches!(self.termination, Termination::BlowUp { .. })
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Attempt<T> {
    y1: Vec<T>,
    err: T,
    cont: [Vec<T>; 5],
}

fn attempt<T: Real, S: System<T>>(
    sys: &S,
    t: T,
    y: &[T],
    k1: &[T],
    h: T,
    seg_end: T,
    c: &Controls,
) -> Attempt<T> {
    let n = y.len();
    let mut k: Vec<Vec<T>> = vec![k1.to_vec()];
    let mut tmp = vec![T::zero(); n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = T::zero();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    acc += lit::<T>(a) * kj[i];
                }
            }
            tmp[i] = y[i] + h * acc;
        }
        let ts = if s >= 5 { t + h } else { t + lit::<T>(C[s]) * h };
        let side = if ts >= seg_end { Side::Left } else { Side::Right };
        let mut ks = vec![T::zero(); n];
        sys.rhs(ts, &tmp, &mut ks, side);
        k.push(ks);
    }
    // Stage 7 is evaluated at the 5th-order solution (FSAL).
    let y1 = tmp;
    // Max-norm of the scaled local error estimate.
    let mut err_acc = T::zero();
    let atol = lit::<T>(c.atol);
    let rtol = lit::<T>(c.rtol);
    let mut r5 = vec![T::zero(); n];
    for i in 0..n {
        let mut e = T::zero();
        let mut d = T::zero();
        for s in 0..7 {
            if E[s] != 0.0 {
                e += lit::<T>(E[s]) * k[s][i];
            }
            if D[s] != 0.0 {
                d += lit::<T>(D[s]) * k[s][i];
            }
        }
        let e = h * e;
        let scale = atol + rtol * if y[i].abs() > y1[i].abs() { y[i].abs() } else { y1[i].abs() };
        let q = (e / scale).abs();
        if q > err_acc {
            err_acc = q;
        }
        r5[i] = h * d;
    }
    let err = err_acc;
    let ydiff: Vec<T> = (0..n).map(|i| y1[i] - y[i]).collect();
    let bspl: Vec<T> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
    let r4: Vec<T> = (0..n).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
    Attempt { y1, err, cont: [y.to_vec(), ydiff, bspl, r4, r5] }
}

fn initial_step<T: Real, S: System<T>>(sys: &S, t: T, y: &[T], f0: &[T], c: &Controls) -> T {
    if let Some(h) = c.h_init {
        return lit(h);
    }
    let n = y.len().max(1) as f64;
    let (mut d0, mut d1) = (0.0, 0.0);
    for i in 0..y.len() {
        let sc = c.atol + c.rtol * y[i].to_f64().abs();
        d0 += (y[i].to_f64() / sc).powi(2);
        d1 += (f0[i].to_f64() / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(c.h_max);
    let y1: Vec<T> = (0..y.len()).map(|i| y[i] + lit::<T>(h0) * f0[i]).collect();
    let mut f1 = vec![T::zero(); y.len()];
    sys.rhs(t + lit(h0), &y1, &mut f1, Side::Right);
    let mut d2 = 0.0;
    for i in 0..y.len() {
        let sc = c.atol + c.rtol * y[i].to_f64().abs();
        d2 += ((f1[i].to_f64() - f0[i].to_f64()) / sc).powi(2);
    }
    let d2 = (d2 / n).sqrt() / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
    lit((100.0 * h0).min(h1).min(c.h_max))
}

/// Integrates `sys` from `(t0, y0)` to `t_end`.
pub fn integrate<T: Real, S: System<T>>(sys: &S, t0: T, y0: &[T], t_end: T, c: &Controls) -> Solution<T> {
    let n = sys.dim();
    assert_eq!(n, y0.len(), "initial state has wrong dimension");
    let mut y = y0.to_vec();
    sys.project(t0, &mut y);
    let mut sol = Solution { t0, y0: y.clone(), steps: Vec::new(), termination: Termination::Completed, rejected: 0 };
    if t_end <= t0 {
        return sol;
    }

    let mut stops: Vec<T> = sys.breakpoints().into_iter().filter(|b| *b > t0 && *b < t_end).collect();
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();
    stops.push(t_end);

    let mut t = t0;
    let mut k1 = vec![T::zero(); n];
    sys.rhs(t, &y, &mut k1, Side::Right);
    let mut h = initial_step(sys, t, &y, &k1, c);
    let h_max = lit::<T>(c.h_max);
    let threshold = lit::<T>(c.escape_threshold);
    let mut steps_taken = 0usize;
    // (t, 1/‖y‖) history once the escape threshold has been crossed.
    let mut escape: Vec<(T, T)> = Vec::new();
    let mut forced_halvings = 0usize;

    for &seg_end in &stops {
        loop {
            if t >= seg_end {
                break;
            }
            if steps_taken >= c.max_steps {
                sol.termination = Termination::MaxSteps { t };
                return sol;
            }
            let h_min = lit::<T>(c.h_min_rel) * if t.abs() > T::one() { t.abs() } else { T::one() };
            if h > h_max {
                h = h_max;
            }
            let mut last = false;
            if t + h >= seg_end || seg_end - (t + h) < h_min {
                h = seg_end - t;
                last = true;
            }
            if h < h_min {
                sol.termination = underflow_outcome(sys, &y, t, h, &escape, c);
                return sol;
            }
            let at = attempt(sys, t, &y, &k1, h, seg_end, c);
            steps_taken += 1;
            let ok = finite(at.err) && at.y1.iter().all(|v| finite(*v));
            if !ok || at.err > T::one() {
                sol.rejected += 1;
                let fac = if ok {
                    let f = 0.9 * at.err.to_f64().powf(-0.2);
                    f.clamp(0.2, 1.0)
                } else {
                    0.25
                };
                h *= lit::<T>(fac);
                continue;
            }
            // Accept.
            let mut y1 = at.y1;
            let t1 = if last { seg_end } else { t + h };
            sys.project(t1, &mut y1);
            sol.steps.push(Step { t0: t, h, y1: y1.clone(), t1, cont: at.cont });
            t = t1;
            y = y1;
            sys.rhs(t, &y, &mut k1, Side::Right);

            let errf = at.err.to_f64().max(1e-10);
            let mut fac = (0.9 * errf.powf(-0.2)).clamp(0.2, 5.0);

            if let Some(norm) = sys.escape_norm(&y) {
                if !finite(norm) {
                    sol.termination = blow_up_from(&escape, t, c);
                    return sol;
                }
                if norm > threshold {
                    escape.push((t, T::one() / norm));
                    forced_halvings += 1;
                    if forced_halvings > 2 {
                        if let Some(term) = confirm_blow_up(&escape, c) {
                            sol.termination = term;
                            return sol;
                        }
                        // Growth not confirmed; keep integrating normally.
                        escape.clear();
                        forced_halvings = 0;
                    } else {
                        fac = fac.min(0.5);
                    }
                } else {
                    escape.clear();
                    forced_halvings = 0;
                }
            }
            h *= lit::<T>(fac);
        }
    }
    sol
}

fn confirm_blow_up<T: Real>(escape: &[(T, T)], c: &Controls) -> Option<Termination<T>> {
    let m = escape.len();
    if m < 3 {
        return None;
    }
    let (ta, va) = escape[m - 3];
    let (tb, vb) = escape[m - 2];
    let (tc, vc) = escape[m - 1];
    // 1/‖y‖ must keep shrinking across both confirming steps.
    if !(vb < va && vc < vb) {
        return None;
    }
    let _ = ta;
    let slope = (vb - vc) / (tc - tb);
    let t_est = tc + vc / slope;
    let half = t_est - tc;
    let lower = tc;
    let upper = t_est + half;
    if (upper - lower).to_f64() > c.bracket_width {
        return None;
    }
    Some(Termination::BlowUp { t_star: (lower + upper) * lit::<T>(0.5), lower, upper })
}

fn blow_up_from<T: Real>(escape: &[(T, T)], t: T, c: &Controls) -> Termination<T> {
    confirm_blow_up(escape, c).unwrap_or(Termination::BlowUp { t_star: t, lower: t, upper: t })
}

fn underflow_outcome<T: Real, S: System<T>>(
    sys: &S,
    y: &[T],
    t: T,
    h: T,
    escape: &[(T, T)],
    c: &Controls,
) -> Termination<T> {
    match sys.escape_norm(y) {
        Some(norm) if norm.to_f64() > c.escape_threshold => {
            if let Some(term) = confirm_blow_up(escape, c) {
                return term;
            }
            let upper = t + T::one() / norm;
            Termination::BlowUp { t_star: (t + upper) * lit::<T>(0.5), lower: t, upper }
        }
        _ => Termination::StiffFailure { t, h },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar<F: Fn(f64, f64) -> f64>(F, bool);

    impl<F: Fn(f64, f64) -> f64> System<f64> for Scalar<F> {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64], _side: Side) {
            dy[0] = (self.0)(t, y[0]);
        }
        fn escape_norm(&self, y: &[f64]) -> Option<f64> {
            self.1.then(|| y[0].abs())
        }
    }

    #[test]
    fn exponential_decay_is_accurate() {
        let sys = Scalar(|_, y| -y, false);
        let sol = integrate(&sys, 0.0, &[1.0], 5.0, &Controls::default());
        assert_eq!(sol.termination, Termination::Completed);
        let y = sol.eval(5.0).unwrap()[0];
        assert!((y - (-5.0f64).exp()).abs() < 1e-10);
        // Dense output between steps.
        for k in 0..50 {
            let t = 0.1 * k as f64;
            assert!((sol.eval(t).unwrap()[0] - (-t).exp()).abs() < 1e-10);
            let d = sol.eval_derivative(t.max(1e-3)).unwrap()[0];
            assert!((d + (-t.max(1e-3)).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn tangent_blow_up_is_bracketed() {
        let sys = Scalar(|_, y| y * y + 1.0, true);
        let sol = integrate(&sys, 0.0, &[0.0], 3.0, &Controls::default());
        match sol.termination {
            Termination::BlowUp { t_star, lower, upper } => {
                assert!(upper - lower <= 1e-6);
                assert!((t_star - std::f64::consts::FRAC_PI_2).abs() < 1e-6, "t* = {t_star}");
                assert!(lower <= std::f64::consts::FRAC_PI_2 + 1e-9);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn breakpoints_are_respected() {
        struct Step1;
        impl System<f64> for Step1 {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, t: f64, _y: &[f64], dy: &mut [f64], side: Side) {
                let on = t > 0.5 || (t == 0.5 && side == Side::Right);
                dy[0] = if on { 1.0 } else { 0.0 };
            }
            fn breakpoints(&self) -> Vec<f64> {
                vec![0.5]
            }
        }
        let sol = integrate(&Step1, 0.0, &[0.0], 1.0, &Controls::default());
        assert!(sol.eval(0.5).unwrap()[0].abs() < 1e-14);
        assert!((sol.eval(1.0).unwrap()[0] - 0.5).abs() < 1e-12);
        assert!(sol.times().iter().any(|t| *t == 0.5));
    }

    #[test]
    fn underflow_without_escape_is_reported() {
        // y' = −sign(y)·1e12·|y|^0.5 forces tiny steps near y = 0 without growth.
        let sys = Scalar(|_, y| -y.signum() * 1e12 * y.abs().sqrt(), true);
        let c = Controls { max_steps: 20_000, ..Default::default() };
        let sol = integrate(&sys, 0.0, &[1.0], 1.0, &c);
        assert!(matches!(
            sol.termination,
            Termination::StiffFailure { .. } | Termination::MaxSteps { .. }
        ));
    }
}
