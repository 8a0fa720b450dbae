//! Oracle checks shared by the focused test targets and the acceptance run.

use emf_glip::autodiff::{
    AdamConfig, AdamState, ConvSpec, ParamId, ParamStore, Shape4, Tape, Tensor4, Var,
};
use emf_glip::grid::{ExposureGrid, GridDims, ObservationMask, SensorReading, SensorSet};
use emf_glip::metrics::{self, idw_interpolate, nearest_interpolate};
use emf_glip::net::{make_prior_input, GeneratorNet, NetConfig, PriorMode};
use emf_glip::Result;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const REL: f64 = 1e-4;
const ABS: f64 = 1e-6;
const SEEDS: std::ops::Range<u64> = 0..5;

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape4) -> Tensor4 {
    let v = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor4::new(shape, v).unwrap()
}

/// Random regression target and a mask with at least one observed cell.
fn random_target(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let target = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
    mask[rng.gen_range(0..n)] = true;
    (target, mask)
}

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS || diff <= REL * analytic.abs().max(numeric.abs())
}

/// Checks d(loss)/d(param) for every entry of every parameter in `store`.
/// `build` records the forward pass from the parameter vars, in store order.
fn check_gradients<F>(label: &str, store: &ParamStore, build: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = s.ids().map(|id| tape.param(s, id)).collect();
        let loss = build(&mut tape, &vars).unwrap();
        tape.value(loss).values()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = store.ids().map(|id| tape.param(store, id)).collect();
    let loss = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();
    let ids: Vec<ParamId> = store.ids().collect();
    for (id, var) in ids.into_iter().zip(&vars) {
        let analytic = grads.wrt(*var).expect("parameter gradient").to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = store.clone();
            plus.get_mut(id).values_mut()[i] += H;
            let mut minus = store.clone();
            minus.get_mut(id).values_mut()[i] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            assert!(
                close(a, numeric),
                "{label}: {}[{i}] analytic {a} vs numeric {numeric}",
                store.name(id)
            );
        }
    }
}

pub fn conv2d_gradients_all_kernels_and_strides() {
    for k in [2, 3, 4] {
        for stride in [1, 2] {
            for seed in SEEDS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + k as u64 * 7 + stride as u64);
                let batch = rng.gen_range(1..=2);
                let cin = rng.gen_range(1..=3);
                let cout = rng.gen_range(1..=3);
                let size = 2 * rng.gen_range(3..=4);
                let mut store = ParamStore::new();
                store.insert("x", random_tensor(&mut rng, Shape4::new(batch, cin, size, size))).unwrap();
                store.insert("w", random_tensor(&mut rng, Shape4::new(cout, cin, k, k))).unwrap();
                store.insert("b", random_tensor(&mut rng, Shape4::new(1, cout, 1, 1))).unwrap();
                let out_len = batch * cout * (size / stride) * (size / stride);
                let (target, mask) = random_target(&mut rng, out_len);
                check_gradients(&format!("conv k{k} s{stride} seed{seed}"), &store, |t, v| {
                    let y = t.conv2d(v[0], v[1], v[2], ConvSpec::same(k, stride))?;
                    t.masked_sq_loss_raw(y, &target, &mask)
                });
            }
        }
    }
}

pub fn conv_leaky_relu_chain_gradients() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut store = ParamStore::new();
        store.insert("x", random_tensor(&mut rng, Shape4::new(1, 1, 4, 4))).unwrap();
        store.insert("w", random_tensor(&mut rng, Shape4::new(2, 1, 3, 3))).unwrap();
        store.insert("b", random_tensor(&mut rng, Shape4::new(1, 2, 1, 1))).unwrap();
        let (target, mask) = random_target(&mut rng, 32);
        check_gradients("conv+lrelu", &store, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], ConvSpec::same(3, 1))?;
            let y = t.leaky_relu(y, 0.2)?;
            t.masked_sq_loss_raw(y, &target, &mask)
        });
    }
}

pub fn pointwise_gradients() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let shape = Shape4::new(rng.gen_range(1..=2), rng.gen_range(1..=3), 5, 6);
        let mut store = ParamStore::new();
        // Keep inputs away from the LeakyReLU kink.
        let mut x = random_tensor(&mut rng, shape);
        for v in x.values_mut() {
            *v += 0.05 * v.signum();
        }
        store.insert("x", x).unwrap();
        let (target, mask) = random_target(&mut rng, shape.len());
        check_gradients("leaky_relu", &store, |t, v| {
            let y = t.leaky_relu(v[0], 0.2)?;
            t.masked_sq_loss_raw(y, &target, &mask)
        });
        check_gradients("sigmoid", &store, |t, v| {
            let y = t.sigmoid(v[0])?;
            t.masked_sq_loss_raw(y, &target, &mask)
        });
        check_gradients("masked loss", &store, |t, v| t.masked_sq_loss_raw(v[0], &target, &mask));
    }
}

pub fn upsample_gradients() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let factor = rng.gen_range(2..=3);
        let shape = Shape4::new(1, rng.gen_range(1..=3), 3, 4);
        let mut store = ParamStore::new();
        store.insert("x", random_tensor(&mut rng, shape)).unwrap();
        let (target, mask) = random_target(&mut rng, shape.len() * factor * factor);
        check_gradients("upsample", &store, |t, v| {
            let y = t.upsample_nearest(v[0], factor)?;
            t.masked_sq_loss_raw(y, &target, &mask)
        });
    }
}

pub fn batch_norm_gradients() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let c = rng.gen_range(1..=3);
        let shape = Shape4::new(rng.gen_range(1..=2), c, 4, 5);
        let mut store = ParamStore::new();
        store.insert("x", random_tensor(&mut rng, shape)).unwrap();
        store.insert("gamma", random_tensor(&mut rng, Shape4::new(1, c, 1, 1))).unwrap();
        store.insert("beta", random_tensor(&mut rng, Shape4::new(1, c, 1, 1))).unwrap();
        let (target, mask) = random_target(&mut rng, shape.len());
        check_gradients("batch_norm", &store, |t, v| {
            let y = t.batch_norm(v[0], v[1], v[2], 1e-5)?;
            t.masked_sq_loss_raw(y, &target, &mask)
        });
    }
}

pub fn concat_gradients() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (ca, cb) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let mut store = ParamStore::new();
        store.insert("a", random_tensor(&mut rng, Shape4::new(1, ca, 4, 4))).unwrap();
        store.insert("b", random_tensor(&mut rng, Shape4::new(1, cb, 4, 4))).unwrap();
        let (target, mask) = random_target(&mut rng, (ca + cb) * 16);
        check_gradients("concat", &store, |t, v| {
            let y = t.concat_channels(v[0], v[1])?;
            t.masked_sq_loss_raw(y, &target, &mask)
        });
    }
}

pub fn small_network_gradients() {
    let dims = GridDims::new(16, 16, 1.0).unwrap();
    for seed in SEEDS {
        let cfg = NetConfig {
            enc_channels: vec![3, 4],
            skip_channels: vec![2, 2],
            ..NetConfig::default().with_depth(2)
        };
        let mut net = GeneratorNet::build(cfg, 16, 16, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let target = ExposureGrid::from_fn(dims, |_, _| rng.gen_range(0.0..1.0)).unwrap();
        let bits = (0..256).map(|i| (i * 7 + seed as usize).is_multiple_of(5)).collect();
        let mask = ObservationMask::from_bits(dims, bits).unwrap();
        let z = make_prior_input(PriorMode::Glip, &target, &mask, 2, seed).unwrap();
        let loss_of = |n: &GeneratorNet| -> f64 {
            let mut tape = Tape::new();
            let y = n.forward(&mut tape, &z).unwrap();
            let l = tape.masked_sq_loss(y, &target, &mask).unwrap();
            tape.value(l).values()[0]
        };

        let mut tape = Tape::new();
        let y = net.forward(&mut tape, &z).unwrap();
        let l = tape.masked_sq_loss(y, &target, &mask).unwrap();
        let grads = tape.backward(l).unwrap();
        net.params_mut().zero_grads();
        grads.accumulate_into(net.params_mut());

        let ids: Vec<ParamId> = net.params().ids().collect();
        for id in ids {
            let analytic = net.params().get(id).grad().unwrap().to_vec();
            let n = analytic.len();
            for i in (0..n).step_by((n / 4).max(1)) {
                let mut plus = net.clone();
                plus.params_mut().get_mut(id).values_mut()[i] += H;
                let mut minus = net.clone();
                minus.params_mut().get_mut(id).values_mut()[i] -= H;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * H);
                assert!(
                    close(analytic[i], numeric),
                    "seed {seed}: {}[{i}] analytic {} vs numeric {numeric}",
                    net.params().name(id),
                    analytic[i]
                );
            }
        }
    }
}

/// Straightforward quadruple loop with the same summation order as the
/// engine: input channel, kernel row, kernel column, then bias.
fn naive_conv(x: &Tensor4, w: &Tensor4, b: &Tensor4, k: usize, stride: usize) -> Tensor4 {
    let (xs, ws) = (x.shape(), w.shape());
    let lead = (k - 1) / 2;
    let (orows, ocols) = (xs.rows.div_ceil(stride), xs.cols.div_ceil(stride));
    let os = Shape4::new(xs.batch, ws.batch, orows, ocols);
    let mut out = Vec::with_capacity(os.len());
    for bi in 0..xs.batch {
        for oc in 0..ws.batch {
            for r in 0..orows {
                for c in 0..ocols {
                    let mut acc = 0.0;
                    for ic in 0..xs.channels {
                        for kh in 0..k {
                            for kw in 0..k {
                                let ir = (r * stride + kh) as isize - lead as isize;
                                let icol = (c * stride + kw) as isize - lead as isize;
                                if ir < 0 || icol < 0 || ir >= xs.rows as isize || icol >= xs.cols as isize {
                                    continue;
                                }
                                acc += w.at(oc, ic, kh, kw) * x.at(bi, ic, ir as usize, icol as usize);
                            }
                        }
                    }
                    out.push(acc + b.values()[oc]);
                }
            }
        }
    }
    Tensor4::new(os, out).unwrap()
}

pub fn conv2d_matches_naive_loop_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in [2, 3, 4] {
        for stride in [1, 2] {
            for _ in 0..5 {
                let batch = rng.gen_range(1..=2);
                let cin = rng.gen_range(1..=3);
                let cout = rng.gen_range(1..=3);
                let size = 2 * rng.gen_range(2..=4);
                let x = random_tensor(&mut rng, Shape4::new(batch, cin, size, size));
                let w = random_tensor(&mut rng, Shape4::new(cout, cin, k, k));
                let b = random_tensor(&mut rng, Shape4::new(1, cout, 1, 1));
                let expect = naive_conv(&x, &w, &b, k, stride);
                let mut tape = Tape::new();
                let (xv, wv, bv) = (tape.constant(x), tape.constant(w), tape.constant(b));
                let y = tape.conv2d(xv, wv, bv, ConvSpec::same(k, stride)).unwrap();
                assert_eq!(tape.value(y).shape(), expect.shape(), "k{k} s{stride}");
                assert_eq!(tape.value(y).values(), expect.values(), "k{k} s{stride}");
            }
        }
    }
}

pub fn full_mask_loss_equals_mse() {
    let dims = GridDims::new(8, 12, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let a = ExposureGrid::from_fn(dims, |_, _| rng.gen_range(0.0..2.0)).unwrap();
        let b = ExposureGrid::from_fn(dims, |_, _| rng.gen_range(0.0..2.0)).unwrap();
        let full = ObservationMask::full(dims);
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor4::new(Shape4::new(1, 1, 8, 12), a.values().to_vec()).unwrap());
        let l = tape.masked_sq_loss(pred, &b, &full).unwrap();
        let mse = metrics::mse(&b, &a, &full).unwrap();
        assert!((tape.value(l).values()[0] - mse).abs() <= 1e-15);
    }
}

pub fn unmasked_cells_do_not_reach_gradients() {
    let dims = GridDims::new(8, 8, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bits: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
    let mask = ObservationMask::from_bits(dims, bits.clone()).unwrap();
    let grads_for = |target: &ExposureGrid, x: &Tensor4| {
        let mut store = ParamStore::new();
        let xi = store.insert("x", x.clone()).unwrap();
        let wi = store.insert("w", Tensor4::filled(Shape4::new(1, 1, 1, 1), 1.0)).unwrap();
        let bi = store.insert("b", Tensor4::zeros(Shape4::new(1, 1, 1, 1))).unwrap();
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.param(&store, xi), tape.param(&store, wi), tape.param(&store, bi));
        let y = tape.conv2d(xv, wv, bv, ConvSpec::same(1, 1)).unwrap();
        let l = tape.masked_sq_loss(y, target, &mask).unwrap();
        let g = tape.backward(l).unwrap();
        [xv, wv, bv].map(|v| g.wrt(v).unwrap().to_vec())
    };
    let x = random_tensor(&mut rng, Shape4::new(1, 1, 8, 8));
    let t1 = ExposureGrid::from_fn(dims, |_, _| rng.gen_range(0.0..1.0)).unwrap();
    // Same target on observed cells, different elsewhere.
    let t2 = ExposureGrid::from_fn(dims, |r, c| {
        if bits[r * 8 + c] { t1.get(r, c) } else { 5.0 + t1.get(r, c) }
    })
    .unwrap();
    let (g1, g2) = (grads_for(&t1, &x), grads_for(&t2, &x));
    assert_eq!(g1, g2);
    for (i, &m) in bits.iter().enumerate() {
        if !m {
            assert_eq!(g1[0][i], 0.0);
        }
    }
}

pub fn adam_two_steps_follow_hand_recurrence() {
    let cfg = AdamConfig::default();
    let mut store = ParamStore::new();
    let id = store.insert("theta", Tensor4::scalar(0.0)).unwrap();
    let mut state = AdamState::new(&store, cfg);
    let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=2 {
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        // (theta + 0.5)^2 has gradient 1 at theta = 0.
        let l = tape.masked_sq_loss_raw(p, &[-0.5], &[true]).unwrap();
        let g = tape.backward(l).unwrap();
        store.zero_grads();
        g.accumulate_into(&mut store);
        state.step(&mut store).unwrap();

        let grad = 2.0 * (theta + 0.5);
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        let m_hat = m / (1.0 - 0.9f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        theta -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((store.get(id).values()[0] - theta).abs() < 1e-12, "step {t}");
    }
    assert_eq!(state.steps(), 2);
}


fn random_sensors(dims: GridDims, count: usize, seed: u64) -> SensorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let readings = sample(&mut rng, dims.len(), count)
        .into_iter()
        .map(|i| SensorReading {
            row: i / dims.cols,
            col: i % dims.cols,
            value_vm: rng.gen_range(0.0..2.0),
        })
        .collect();
    SensorSet::new(dims, readings).unwrap()
}

pub fn idw_matches_brute_force() {
    let dims = GridDims::new(16, 16, 1.0).unwrap();
    for seed in 0..5 {
        let s = random_sensors(dims, 3 + seed as usize * 7, seed);
        let got = idw_interpolate(&s, dims, 2.0).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                let hit = s.readings().iter().find(|x| x.row == r && x.col == c);
                let expect = match hit {
                    Some(x) => x.value_vm,
                    None => {
                        let (mut num, mut den) = (0.0, 0.0);
                        for x in s.readings() {
                            let d = ((x.row as f64 - r as f64).powi(2) + (x.col as f64 - c as f64).powi(2)).sqrt();
                            num += x.value_vm / (d * d);
                            den += 1.0 / (d * d);
                        }
                        num / den
                    }
                };
                assert!((got.get(r, c) - expect).abs() <= 1e-12, "seed {seed} at ({r},{c})");
            }
        }
    }
}

pub fn nearest_matches_brute_force() {
    let dims = GridDims::new(16, 16, 1.0).unwrap();
    for seed in 0..5 {
        let s = random_sensors(dims, 2 + seed as usize * 9, 100 + seed);
        let got = nearest_interpolate(&s, dims).unwrap();
        for r in 0..16i64 {
            for c in 0..16i64 {
                let best = s
                    .readings()
                    .iter()
                    .min_by_key(|x| {
                        let d2 = (x.row as i64 - r).pow(2) + (x.col as i64 - c).pow(2);
                        (d2, x.row, x.col)
                    })
                    .unwrap();
                assert!((got.get(r as usize, c as usize) - best.value_vm).abs() <= 1e-12);
            }
        }
    }
}
