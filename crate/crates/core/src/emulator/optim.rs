//! Box-constrained Nelder–Mead used for hyperparameter estimation.

/// Result of one local search.
#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// Trial points are clamped to the box. The search works in coordinates
/// normalized to `[0, 1]` with an initial simplex edge of 0.1. Non-finite
/// objective values are treated as `+∞`.
pub(crate) fn nelder_mead_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], max_evals: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let to_x = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(lower.iter().zip(upper))
            .map(|(v, (lo, hi))| lo + v.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    };
    let mut eval = |u: &[f64]| {
        let v = f(&to_x(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let clamp = |u: Vec<f64>| u.into_iter().map(|v| v.clamp(0.0, 1.0)).collect::<Vec<_>>();

    let u0: Vec<f64> = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (lo, hi))| {
            if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut simplex = vec![u0.clone()];
    for k in 0..n {
        let mut u = u0.clone();
        u[k] = if u[k] + 0.1 <= 1.0 { u[k] + 0.1 } else { u[k] - 0.1 };
        simplex.push(u);
    }
    let mut values: Vec<f64> = simplex.iter().map(|u| eval(u)).collect();
    let mut evals = simplex.len();

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
        simplex = order.iter().map(|i| simplex[*i].clone()).collect();
        values = order.iter().map(|i| values[*i]).collect();

        let (best, worst) = (values[0], values[n]);
        let size = simplex[1..]
            .iter()
            .map(|u| {
                u.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) && size < 1e-6 {
            break;
        }
        if size < 1e-10 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|u| u[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| {
            clamp(
                (0..n)
                    .map(|k| centroid[k] + t * (simplex[n][k] - centroid[k]))
                    .collect(),
            )
        };

        let reflected = along(-1.0);
        let fr = eval(&reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = eval(&expanded);
            evals += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = along(-0.5);
                let v = eval(&c);
                (c, v)
            } else {
                let c = along(0.5);
                let v = eval(&c);
                (c, v)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n)
                        .map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]))
                        .collect();
                    values[i] = eval(&simplex[i]);
                }
                evals += n;
            }
        }
    }

    let best = (0..=n).min_by(|a, b| values[*a].total_cmp(&values[*b])).unwrap_or(0);
    Minimum {
        x: to_x(&simplex[best]),
        value: values[best],
    }
}
