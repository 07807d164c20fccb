//! Checks the covariance series against exact second moments of `Psi_i(t)`.
//!
//! For a finite chain, `E Psi_i(t) Psi_j(t) = sum_{n, n'} E F_i(X(n), .., X(in)) F_j(X(n'), .., X(jn'))`
//! can be summed exactly by enumerating the states at the distinct times
//! involved. The difference quotient over `t1 < t2`, both multiples of every
//! `lcm(i, j)`, equals `D_ij` up to terms that decay geometrically in `t1`.

use nonconv_core::covariance::limiting_d;
use nonconv_core::{decompose, DecomposedFunction, FunctionSpec, ModelSpec, ProcessModel};

struct Chain {
    pi: Vec<f64>,
    powers: Vec<Vec<Vec<f64>>>,
}

impl Chain {
    fn new(model: &ProcessModel, max_lag: usize) -> Self {
        let (p, pi) = model.chain().unwrap();
        let s = p.len();
        let mut powers = vec![(0..s).map(|i| (0..s).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect::<Vec<Vec<f64>>>()];
        for k in 1..=max_lag {
            let prev = &powers[k - 1];
            let next = (0..s)
                .map(|i| (0..s).map(|j| (0..s).map(|m| prev[i][m] * p[m][j]).sum()).collect())
                .collect();
            powers.push(next);
        }
        Self { pi: pi.to_vec(), powers }
    }

    /// `E f(X(times[0]), ..., X(times[k-1]))` for sorted distinct times.
    fn expect(&self, times: &[usize], f: &mut dyn FnMut(&[usize]) -> f64) -> f64 {
        let s = self.pi.len();
        let mut states = vec![0usize; times.len()];
        let mut total = 0.0;
        loop {
            let mut w = self.pi[states[0]];
            for k in 1..times.len() {
                w *= self.powers[times[k] - times[k - 1]][states[k - 1]][states[k]];
            }
            if w != 0.0 {
                total += w * f(&states);
            }
            let mut pos = times.len();
            loop {
                if pos == 0 {
                    return total;
                }
                pos -= 1;
                states[pos] += 1;
                if states[pos] < s {
                    break;
                }
                states[pos] = 0;
            }
        }
    }
}

fn second_moment(chain: &Chain, d: &DecomposedFunction, i: usize, j: usize, t: usize) -> f64 {
    let mut total = 0.0;
    for n in 1..=t / i {
        for m in 1..=t / j {
            let mut times: Vec<usize> = (1..=i).map(|k| k * n).chain((1..=j).map(|k| k * m)).collect();
            times.sort_unstable();
            times.dedup();
            let slot = |time: usize| times.binary_search(&time).unwrap();
            let xs: Vec<usize> = (1..=i).map(|k| slot(k * n)).collect();
            let ys: Vec<usize> = (1..=j).map(|k| slot(k * m)).collect();
            let mut f = |states: &[usize]| {
                // default observable: state k takes the value k
                let x: Vec<f64> = xs.iter().map(|&q| states[q] as f64).collect();
                let y: Vec<f64> = ys.iter().map(|&q| states[q] as f64).collect();
                d.eval_component(i, &x).unwrap() * d.eval_component(j, &y).unwrap()
            };
            total += chain.expect(&times, &mut f);
        }
    }
    total
}

fn cyclic_chain() -> ProcessModel {
    // doubly stochastic and not reversible
    ProcessModel::from_spec(ModelSpec::FiniteMarkov {
        transition: vec![vec![0.1, 0.6, 0.3], vec![0.3, 0.1, 0.6], vec![0.6, 0.3, 0.1]],
        observable: None,
    })
    .unwrap()
}

fn skewed_table(arity: usize) -> FunctionSpec {
    let alphabet = vec![vec![0.0], vec![1.0], vec![2.0]];
    let values = (0..3usize.pow(arity as u32)).map(|k| ((k * 7 + 3) % 11) as f64 - 4.0 + 0.1 * k as f64).collect();
    FunctionSpec::dense_table(arity, alphabet, values).unwrap()
}

#[test]
fn series_matches_exact_moments_on_a_non_reversible_chain() {
    let model = cyclic_chain();
    let (t1, t2) = (120, 360);
    let chain = Chain::new(&model, t2);
    for arity in [2usize, 3] {
        let d = decompose(&skewed_table(arity), model.marginal()).unwrap();
        let series = limiting_d(&d, &model, 80, 1e-10).unwrap();
        for i in 1..=arity {
            for j in i..=arity {
                let slope = (second_moment(&chain, &d, i, j, t2) - second_moment(&chain, &d, i, j, t1)) / (t2 - t1) as f64;
                let got = series.d(i, j);
                assert!((slope - got).abs() < 1e-9 * (1.0 + got.abs()), "arity {arity}, ({i},{j}): exact {slope}, series {got}");
            }
        }
    }
}

#[test]
fn moment_deviation_stays_bounded() {
    // |E Psi_i(t) Psi_j(t) - D_ij t| does not grow with t
    let model = ProcessModel::two_state(0.2, 0.4).unwrap();
    let d = decompose(&FunctionSpec::product(2), model.marginal()).unwrap();
    let series = limiting_d(&d, &model, 200, 1e-10).unwrap();
    let chain = Chain::new(&model, 1024);
    for (i, j) in [(1, 1), (1, 2), (2, 2)] {
        let gaps: Vec<f64> = [256usize, 512, 1024]
            .iter()
            .map(|&t| (second_moment(&chain, &d, i, j, t) - series.d(i, j) * t as f64).abs())
            .collect();
        let spread = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-8, "({i},{j}) deviations {gaps:?}");
    }
}

fn b_term(chain: &Chain, d: &DecomposedFunction, i: usize, j: usize, n: usize, m: usize) -> f64 {
    let mut times: Vec<usize> = (1..=i).map(|k| k * n).chain((1..=j).map(|k| k * m)).collect();
    times.sort_unstable();
    times.dedup();
    let slot = |time: usize| times.binary_search(&time).unwrap();
    let xs: Vec<usize> = (1..=i).map(|k| slot(k * n)).collect();
    let ys: Vec<usize> = (1..=j).map(|k| slot(k * m)).collect();
    let mut f = |states: &[usize]| {
        let x: Vec<f64> = xs.iter().map(|&q| states[q] as f64).collect();
        let y: Vec<f64> = ys.iter().map(|&q| states[q] as f64).collect();
        d.eval_component(i, &x).unwrap() * d.eval_component(j, &y).unwrap()
    };
    chain.expect(&times, &mut f)
}

#[test]
fn single_terms_match_far_out_correlations() {
    // b_ij(n, n') -> a_ij(u, .., vu) along i n - j n' = v u
    use nonconv_core::covariance::{a_term, gcd};
    let model = cyclic_chain();
    let chain = Chain::new(&model, 800);
    let d = decompose(&skewed_table(3), model.marginal()).unwrap();
    let laws = model.pair_laws(20).unwrap();
    for (i, j) in [(1, 1), (1, 2), (2, 2), (2, 3), (3, 3)] {
        let v = gcd(i, j);
        for u in -3i64..=3 {
            // smallest n' near 200 solving i n - j n' = v u
            let (n, m) = (200..)
                .find_map(|m: usize| {
                    let lhs = (j * m) as i64 + v as i64 * u;
                    (lhs > 0 && lhs % i as i64 == 0).then(|| ((lhs / i as i64) as usize, m))
                })
                .unwrap();
            let exact = b_term(&chain, &d, i, j, n, m);
            let series = a_term(&d, i, j, u, &laws).unwrap();
            assert!((exact - series).abs() < 1e-10, "({i},{j}) u={u}: exact {exact}, series {series}");
        }
    }
}
