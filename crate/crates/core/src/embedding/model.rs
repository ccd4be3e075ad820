use super::ModelKind;

/// Plausibility of `(h, r, t)` given the three stored rows.
///
/// - TransE: `-||h + r - t||`
/// - ComplEx: `Re(sum h_i r_i conj(t_i))`
/// - RotatE: `-||h o e^{i theta} - t||`
pub fn score(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE => {
            let sq: f64 = h.iter().zip(r).zip(t).map(|((a, b), c)| (a + b - c) * (a + b - c)).sum();
            -sq.sqrt()
        }
        ModelKind::ComplEx => {
            let n = h.len() / 2;
            let (hr, hi) = h.split_at(n);
            let (rr, ri) = r.split_at(n);
            let (tr, ti) = t.split_at(n);
            let mut s = 0.0;
            for i in 0..n {
                s += (hr[i] * rr[i] - hi[i] * ri[i]) * tr[i] + (hr[i] * ri[i] + hi[i] * rr[i]) * ti[i];
            }
            s
        }
        ModelKind::RotatE => {
            let n = h.len() / 2;
            let (hr, hi) = h.split_at(n);
            let (tr, ti) = t.split_at(n);
            let mut sq = 0.0;
            for i in 0..n {
                let (sin, cos) = r[i].sin_cos();
                let dr = hr[i] * cos - hi[i] * sin - tr[i];
                let di = hr[i] * sin + hi[i] * cos - ti[i];
                sq += dr * dr + di * di;
            }
            -sq.sqrt()
        }
    }
}

/// Adds `coeff * d score / d row` into `gh`, `gr` and `gt`. Distance models
/// use the zero subgradient where the residual vanishes. RotatE relation
/// gradients are with respect to the stored phases.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_gradients(
    kind: ModelKind,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    coeff: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    match kind {
        ModelKind::TransE => {
            let norm = -score(kind, h, r, t);
            if norm == 0.0 {
                return;
            }
            let c = coeff / norm;
            for i in 0..h.len() {
                let d = (h[i] + r[i] - t[i]) * c;
                gh[i] -= d;
                gr[i] -= d;
                gt[i] += d;
            }
        }
        ModelKind::ComplEx => {
            let n = h.len() / 2;
            for i in 0..n {
                let (a, b) = (h[i], h[i + n]);
                let (c, e) = (r[i], r[i + n]);
                let (f, g) = (t[i], t[i + n]);
                gh[i] += coeff * (c * f + e * g);
                gh[i + n] += coeff * (c * g - e * f);
                gr[i] += coeff * (a * f + b * g);
                gr[i + n] += coeff * (a * g - b * f);
                gt[i] += coeff * (a * c - b * e);
                gt[i + n] += coeff * (a * e + b * c);
            }
        }
        ModelKind::RotatE => {
            let n = h.len() / 2;
            let norm = -score(kind, h, r, t);
            if norm == 0.0 {
                return;
            }
            let k = -coeff / norm;
            for i in 0..n {
                let (a, b) = (h[i], h[i + n]);
                let (sin, cos) = r[i].sin_cos();
                let dr = (a * cos - b * sin - t[i]) * k;
                let di = (a * sin + b * cos - t[i + n]) * k;
                gh[i] += dr * cos + di * sin;
                gh[i + n] += -dr * sin + di * cos;
                gr[i] += dr * (-a * sin - b * cos) + di * (a * cos - b * sin);
                gt[i] -= dr;
                gt[i + n] -= di;
            }
        }
    }
}

/// `(d/dh, d/dr, d/dt)` of [`score`].
pub fn score_gradients(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gh = vec![0.0; h.len()];
    let mut gr = vec![0.0; r.len()];
    let mut gt = vec![0.0; t.len()];
    accumulate_gradients(kind, h, r, t, 1.0, &mut gh, &mut gr, &mut gt);
    (gh, gr, gt)
}

/// Scores as fed to the sigmoid losses: `margin + S` for distance models,
/// raw `S` for ComplEx. A zero margin reproduces the bare scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scorer {
    pub kind: ModelKind,
    pub margin: f64,
}

impl Scorer {
    pub fn new(kind: ModelKind, margin: f64) -> Self {
        Self { kind, margin }
    }

    pub fn logit(&self, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
        let s = score(self.kind, h, r, t);
        if self.kind.is_distance() {
            self.margin + s
        } else {
            s
        }
    }
}
