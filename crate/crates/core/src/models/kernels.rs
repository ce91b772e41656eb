//! Per-model score functions on raw parameter rows and their analytic
//! gradients.

use super::{ModelKind, ModelSpec, Norm};
use crate::linalg::dot;

pub(crate) fn score_rows(spec: &ModelSpec, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let d = spec.entity_dim;
    match spec.kind {
        ModelKind::TransE => {
            let diff = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
            match spec.norm {
                Norm::L1 => -diff.map(f64::abs).sum::<f64>(),
                Norm::L2 => -diff.map(|x| x * x).sum::<f64>().sqrt(),
            }
        }
        ModelKind::TransH => {
            let (rv, w) = r.split_at(d);
            let wh = dot(w, h);
            let wt = dot(w, t);
            -(0..d)
                .map(|i| {
                    let x = (h[i] - wh * w[i]) + rv[i] - (t[i] - wt * w[i]);
                    x * x
                })
                .sum::<f64>()
        }
        ModelKind::TransD => {
            let dr = spec.relation_dim;
            let (rv, rp) = r.split_at(dr);
            let hp = transd_project(spec, h, rp).0;
            let tp = transd_project(spec, t, rp).0;
            -(0..dr)
                .map(|i| (hp[i] + rv[i] - tp[i]).powi(2))
                .sum::<f64>()
        }
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((h, r), t)| r * (h * t)).sum(),
        ModelKind::Rescal => (0..d).map(|i| h[i] * dot(&r[i * d..(i + 1) * d], t)).sum(),
        ModelKind::Analogy => {
            let s = spec.analogy_scalar_dims;
            let mut f: f64 = (0..s).map(|i| r[i] * (h[i] * t[i])).sum();
            for i in (s..d).step_by(2) {
                let (a, b) = (r[i], r[i + 1]);
                f += a * (h[i] * t[i] + h[i + 1] * t[i + 1])
                    + b * (h[i + 1] * t[i] - h[i] * t[i + 1]);
            }
            f
        }
    }
}

/// TransD projection `M e` with `M = r_p e_p^T + I`, rescaled onto the unit
/// ball when its norm exceeds 1. Returns the projection, the raw vector and
/// its norm.
fn transd_project(spec: &ModelSpec, e_row: &[f64], rp: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let dv = spec.entity_dim;
    let dr = spec.relation_dim;
    let (e, ep) = e_row.split_at(dv);
    let s = dot(ep, e);
    let raw: Vec<f64> = (0..dr)
        .map(|i| rp[i] * s + if i < dv { e[i] } else { 0.0 })
        .collect();
    let n = dot(&raw, &raw).sqrt();
    let proj = if n > 1.0 {
        raw.iter().map(|x| x / n).collect()
    } else {
        raw.clone()
    };
    (proj, raw, n)
}

/// Adds `scale * d score / d(h, r, t)` into the three buffers.
pub(crate) fn add_score_grad(
    spec: &ModelSpec,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    scale: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    let d = spec.entity_dim;
    match spec.kind {
        ModelKind::TransE => {
            let x: Vec<f64> = (0..d).map(|i| h[i] + r[i] - t[i]).collect();
            let g: Vec<f64> = match spec.norm {
                Norm::L1 => x.iter().map(|v| -signum0(*v)).collect(),
                Norm::L2 => {
                    let n = dot(&x, &x).sqrt();
                    if n == 0.0 {
                        vec![0.0; d]
                    } else {
                        x.iter().map(|v| -v / n).collect()
                    }
                }
            };
            for i in 0..d {
                gh[i] += scale * g[i];
                gr[i] += scale * g[i];
                gt[i] -= scale * g[i];
            }
        }
        ModelKind::TransH => {
            let (rv, w) = r.split_at(d);
            let u: Vec<f64> = (0..d).map(|i| h[i] - t[i]).collect();
            let s = dot(w, &u);
            let g: Vec<f64> = (0..d).map(|i| -2.0 * (u[i] - s * w[i] + rv[i])).collect();
            let gw = dot(&g, w);
            let (grv, grw) = gr.split_at_mut(d);
            for i in 0..d {
                let proj = g[i] - gw * w[i];
                gh[i] += scale * proj;
                gt[i] -= scale * proj;
                grv[i] += scale * g[i];
                grw[i] += scale * (-gw * u[i] - s * g[i]);
            }
        }
        ModelKind::TransD => {
            let dv = spec.entity_dim;
            let dr = spec.relation_dim;
            let (rv, rp) = r.split_at(dr);
            let (hp, hraw, hn) = transd_project(spec, h, rp);
            let (tp, traw, tn) = transd_project(spec, t, rp);
            let g: Vec<f64> = (0..dr).map(|i| -2.0 * (hp[i] + rv[i] - tp[i])).collect();
            let (grv, grp) = gr.split_at_mut(dr);
            for i in 0..dr {
                grv[i] += scale * g[i];
            }
            let neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
            for (row, raw, n, up, buf) in [
                (h, &hraw, hn, &g, &mut *gh),
                (t, &traw, tn, &neg_g, &mut *gt),
            ] {
                let b = through_unit_rescale(up, raw, n);
                let (e, ep) = row.split_at(dv);
                let (ge, gep) = buf.split_at_mut(dv);
                let rpb = dot(rp, &b);
                let epe = dot(ep, e);
                for i in 0..dv {
                    let pt_b = if i < dr { b[i] } else { 0.0 };
                    ge[i] += scale * (ep[i] * rpb + pt_b);
                    gep[i] += scale * e[i] * rpb;
                }
                for i in 0..dr {
                    grp[i] += scale * b[i] * epe;
                }
            }
        }
        ModelKind::DistMult => {
            for i in 0..d {
                gh[i] += scale * r[i] * t[i];
                gr[i] += scale * h[i] * t[i];
                gt[i] += scale * h[i] * r[i];
            }
        }
        ModelKind::Rescal => {
            for i in 0..d {
                let row = &r[i * d..(i + 1) * d];
                gh[i] += scale * dot(row, t);
                for j in 0..d {
                    gt[j] += scale * h[i] * row[j];
                    gr[i * d + j] += scale * h[i] * t[j];
                }
            }
        }
        ModelKind::Analogy => {
            let s = spec.analogy_scalar_dims;
            for i in 0..s {
                gh[i] += scale * r[i] * t[i];
                gr[i] += scale * h[i] * t[i];
                gt[i] += scale * r[i] * h[i];
            }
            for i in (s..d).step_by(2) {
                let (a, b) = (r[i], r[i + 1]);
                let (h0, h1, t0, t1) = (h[i], h[i + 1], t[i], t[i + 1]);
                gh[i] += scale * (a * t0 - b * t1);
                gh[i + 1] += scale * (a * t1 + b * t0);
                gt[i] += scale * (a * h0 + b * h1);
                gt[i + 1] += scale * (a * h1 - b * h0);
                gr[i] += scale * (h0 * t0 + h1 * t1);
                gr[i + 1] += scale * (h1 * t0 - h0 * t1);
            }
        }
    }
}

/// Chain rule through `y -> y / |y|`, applied only when `|y| > 1`.
fn through_unit_rescale(upstream: &[f64], raw: &[f64], n: f64) -> Vec<f64> {
    if n > 1.0 {
        let proj = dot(upstream, raw) / n;
        upstream
            .iter()
            .zip(raw)
            .map(|(a, y)| (a - proj * y / n) / n)
            .collect()
    } else {
        upstream.to_vec()
    }
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Dense row-major `d x d` ANALOGY relation matrix built from its block
/// parameters.
pub fn analogy_matrix(spec: &ModelSpec, r: &[f64]) -> Vec<f64> {
    let d = spec.entity_dim;
    let s = spec.analogy_scalar_dims;
    let mut m = vec![0.0; d * d];
    for i in 0..s {
        m[i * d + i] = r[i];
    }
    for i in (s..d).step_by(2) {
        let (a, b) = (r[i], r[i + 1]);
        m[i * d + i] = a;
        m[i * d + i + 1] = -b;
        m[(i + 1) * d + i] = b;
        m[(i + 1) * d + i + 1] = a;
    }
    m
}
