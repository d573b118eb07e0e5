//! Helpers shared by the integration tests: seeded generators, plain-loop
//! reference implementations and the randomized gradient suite.
#![allow(dead_code)]

use glore_core::crossmodal::total_loss_graph;
use glore_core::encoders::{encode_image_graph, encode_text_graph, EncodedBatch, EncoderVars, ImageBatch, TextBatch};
use glore_core::numerics::gradcheck::{check_gradients, FD_STEP};
use glore_core::{EncoderConfig, EncoderParams, LossConfig, Tape, Tensor, TokenSequence, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_rows(&random_rows(rng, rows, cols)).unwrap()
}

pub fn to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Plain-loop oracles

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Direct `ln Σ exp` with no max shift; only for moderate inputs.
pub fn naive_lse(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.exp()).sum::<f64>().ln()
}

pub fn naive_softmax(xs: &[f64]) -> Vec<f64> {
    let z: f64 = xs.iter().map(|x| x.exp()).sum();
    xs.iter().map(|x| x.exp() / z).collect()
}

/// Attention-weighted region context per word, then the aggregated score.
pub fn oracle_local_score(regions: &[Vec<f64>], words: &[Vec<f64>], l1: f64, l2: f64) -> f64 {
    let cosines: Vec<f64> = words
        .iter()
        .map(|w| {
            let sims: Vec<f64> = regions.iter().map(|v| l1 * dot(w, v)).collect();
            let a = naive_softmax(&sims);
            let d = w.len();
            let ctx: Vec<f64> = (0..d).map(|k| regions.iter().zip(&a).map(|(v, ai)| ai * v[k]).sum()).collect();
            cos(&ctx, w)
        })
        .collect();
    naive_lse(&cosines.iter().map(|c| l2 * c).collect::<Vec<_>>()) / l2
}

/// Mean over rows of `-ln softmax(row / τ)[i]`, or over columns for `t2i`.
pub fn oracle_infonce(m: &[Vec<f64>], tau: f64, t2i: bool) -> f64 {
    let b = m.len();
    (0..b)
        .map(|i| {
            let logits: Vec<f64> = (0..b).map(|j| if t2i { m[j][i] } else { m[i][j] } / tau).collect();
            naive_lse(&logits) - logits[i]
        })
        .sum::<f64>()
        / b as f64
}

/// Batch of unit feature rows per item.
pub struct OracleBatch {
    pub image_local: Vec<Vec<Vec<f64>>>,
    pub image_global: Vec<Vec<f64>>,
    pub text_local: Vec<Vec<Vec<f64>>>,
    pub text_global: Vec<Vec<f64>>,
}

pub fn oracle_total_loss(batch: &OracleBatch, cfg: &LossConfig) -> f64 {
    let b = batch.image_global.len();
    let g: Vec<Vec<f64>> = (0..b)
        .map(|i| (0..b).map(|j| dot(&batch.image_global[i], &batch.text_global[j])).collect())
        .collect();
    let l: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            (0..b)
                .map(|j| oracle_local_score(&batch.image_local[i], &batch.text_local[j], cfg.lambda1, cfg.lambda2))
                .collect()
        })
        .collect();
    let w = &cfg.weights;
    w.global_i2t * oracle_infonce(&g, cfg.tau_global, false)
        + w.global_t2i * oracle_infonce(&g, cfg.tau_global, true)
        + w.local_i2t * oracle_infonce(&l, cfg.tau_local, false)
        + w.local_t2i * oracle_infonce(&l, cfg.tau_local, true)
}

/// Pairwise count of correctly ordered positive/negative pairs, ties half.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Index of the first maximum by a linear scan.
pub fn scan_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Randomized gradient suite

pub const SUITE_BATCH: usize = 3;
pub const SUITE_WORDS: usize = 5;
pub const SUITE_REGIONS: usize = 4;
pub const SUITE_DIM: usize = 8;

#[derive(Debug, Default, Clone)]
pub struct SuiteResult {
    pub instances: usize,
    pub elements: usize,
    pub max_rel_error: f64,
    pub worst_case: String,
}

impl SuiteResult {
    fn record(&mut self, label: &str, instance: usize, max: f64, elements: usize) {
        self.elements += elements;
        if max > self.max_rel_error {
            self.max_rel_error = max;
            self.worst_case = format!("{label} #{instance}");
        }
    }
}

/// Every primitive composed into one scalar.
fn composite(tape: &mut Tape, v: &[Var], scale: f64) -> glore_core::Result<Var> {
    let (words, regions, other) = (v[0], v[1], v[2]);
    let rt = tape.transpose(regions)?;
    let s = tape.matmul(words, rt)?;
    let p = tape.softmax_rows(s, scale)?;
    let ctx = tape.matmul(p, regions)?;
    let n = tape.l2_normalize_rows(ctx)?;
    let c = tape.cosine_rows(n, other)?;
    let ct = tape.transpose(c)?;
    let lse = tape.logsumexp_rows(ct)?;
    let g = tape.gather_rows(words, &[0, 2, 2, 4])?;
    let gm = tape.mul(g, regions)?;
    let m = tape.mean(gm)?;
    let d = tape.sub(words, other)?;
    let d2 = tape.mul(d, d)?;
    let d2s = tape.scale(d2, 0.3)?;
    let s2 = tape.sum(d2s)?;
    let a = tape.add(lse, m)?;
    tape.add(a, s2)
}

fn suite_encoder_config() -> EncoderConfig {
    EncoderConfig {
        dim: SUITE_DIM,
        grid_rows: 2,
        grid_cols: 2,
        patch_pool: 2,
        vocab_size: 11,
        max_length: SUITE_WORDS,
        positions: true,
        position_scale: 0.01,
        init_range: 0.5,
    }
}

fn encoder_objective(
    tape: &mut Tape,
    v: &[Var],
    images: &ImageBatch,
    texts: &TextBatch,
    weights: &[Tensor; 4],
) -> glore_core::Result<Var> {
    let vars = EncoderVars {
        patch_proj: v[0],
        patch_bias: v[1],
        token_table: v[2],
        image_global_proj: v[3],
        text_global_proj: v[4],
    };
    let im = encode_image_graph(tape, &vars, images)?;
    let tx = encode_text_graph(tape, &vars, texts)?;
    let mut total: Option<Var> = None;
    for (out, w) in [im.local, im.global, tx.local, tx.global].into_iter().zip(weights) {
        let wv = tape.constant(w.clone());
        let prod = tape.mul(out, wv)?;
        let s = tape.sum(prod)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    Ok(total.expect("four outputs"))
}

fn loss_objective(tape: &mut Tape, v: &[Var], offsets: &[usize], cfg: &LossConfig) -> glore_core::Result<Var> {
    let images = EncodedBatch {
        local: tape.l2_normalize_rows(v[0])?,
        global: tape.l2_normalize_rows(v[1])?,
    };
    let texts = EncodedBatch {
        local: tape.l2_normalize_rows(v[2])?,
        global: tape.l2_normalize_rows(v[3])?,
    };
    Ok(total_loss_graph(tape, images, SUITE_REGIONS, texts, offsets, cfg)?.total)
}

/// Checks primitive, encoder and loss gradients on `instances` random draws
/// with `B = 3`, `T = 5`, `R = 4`, `D = 8`.
pub fn gradient_suite(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = rng(seed);
    let mut out = SuiteResult {
        instances,
        ..SuiteResult::default()
    };
    let (b, t, r, d) = (SUITE_BATCH, SUITE_WORDS, SUITE_REGIONS, SUITE_DIM);
    for inst in 0..instances {
        let inputs = vec![random_matrix(&mut rng, t, d), random_matrix(&mut rng, r, d), random_matrix(&mut rng, t, d)];
        let scale = rng.gen_range(0.5..5.0);
        let rep = check_gradients(|tape, v| composite(tape, v, scale), &inputs, FD_STEP).unwrap();
        out.record("primitives", inst, rep.max_rel_error, rep.checked);

        let cfg = suite_encoder_config();
        let params = EncoderParams::init(cfg.clone(), &mut rng).unwrap();
        let patches: Vec<Tensor> = (0..b)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..r).map(|_| (0..cfg.patch_dim()).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
                Tensor::from_rows(&rows).unwrap()
            })
            .collect();
        let images = ImageBatch::from_patches(&patches.iter().collect::<Vec<_>>()).unwrap();
        let seqs: Vec<TokenSequence> = (0..b)
            .map(|_| {
                let len = rng.gen_range(1..=t);
                TokenSequence::new((0..len).map(|_| rng.gen_range(0..cfg.vocab_size)).collect(), cfg.vocab_size, t).unwrap()
            })
            .collect();
        let texts = TextBatch::new(&seqs.iter().collect::<Vec<_>>(), &cfg).unwrap();
        let rows_text = texts.ids.len();
        let weights = [
            random_matrix(&mut rng, b * r, d),
            random_matrix(&mut rng, b, d),
            random_matrix(&mut rng, rows_text, d),
            random_matrix(&mut rng, b, d),
        ];
        let enc_inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
        let rep = check_gradients(
            |tape, v| encoder_objective(tape, v, &images, &texts, &weights),
            &enc_inputs,
            FD_STEP,
        )
        .unwrap();
        out.record("encoders", inst, rep.max_rel_error, rep.checked);

        let loss_cfg = LossConfig {
            lambda1: rng.gen_range(1.0..6.0),
            lambda2: rng.gen_range(1.0..6.0),
            tau_global: rng.gen_range(0.1..1.0),
            tau_local: rng.gen_range(0.1..1.0),
            ..LossConfig::default()
        };
        let offsets: Vec<usize> = (0..=b).map(|j| j * t).collect();
        let loss_inputs = vec![
            random_matrix(&mut rng, b * r, d),
            random_matrix(&mut rng, b, d),
            random_matrix(&mut rng, b * t, d),
            random_matrix(&mut rng, b, d),
        ];
        let rep = check_gradients(|tape, v| loss_objective(tape, v, &offsets, &loss_cfg), &loss_inputs, FD_STEP).unwrap();
        out.record("loss", inst, rep.max_rel_error, rep.checked);
    }
    out
}
