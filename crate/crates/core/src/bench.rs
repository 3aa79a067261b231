//! Primitive microbenchmarks and the incremental-versus-fused comparison.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use hefuse_ckks::linops::{accumulate_score, inner_product, realign};
use hefuse_ckks::{
    keygen, power_of_two_steps, Ciphertext, CkksContext, CkksError, CkksParams, EvaluationKeys, Evaluator, OpCounts,
    PackedLayout, PublicKey, DEFAULT_SCALE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BenchConfig {
    pub iterations: usize,
    pub warmups: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            iterations: 21,
            warmups: 3,
        }
    }
}

/// Median wall time of `f` in nanoseconds.
pub fn median_time<T>(config: BenchConfig, mut f: impl FnMut() -> T) -> f64 {
    for _ in 0..config.warmups {
        black_box(f());
    }
    let mut times: Vec<f64> = (0..config.iterations.max(1))
        .map(|_| {
            let start = Instant::now();
            black_box(f());
            start.elapsed().as_nanos() as f64
        })
        .collect();
    median(&mut times)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchEntry {
    pub op: String,
    pub median_ns: f64,
    /// `median_ns` divided by the Add median.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub preset: String,
    pub template_len: usize,
    pub config: BenchConfig,
    pub entries: Vec<BenchEntry>,
    /// Fraction of inner-product time spent in rotations.
    pub rotation_share: f64,
}

pub const BENCH_OPS: [&str; 9] = ["Ecd", "Dcd", "Enc", "Dec", "Add", "Mul", "Rot1", "IP_d", "IP_2d"];

impl BenchReport {
    pub fn entry(&self, op: &str) -> Option<&BenchEntry> {
        self.entries.iter().find(|e| e.op == op)
    }

    pub fn normalized(&self, op: &str) -> f64 {
        self.entry(op).map_or(f64::NAN, |e| e.normalized)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "parameter set: {}  (d = {}, median of {} runs after {} warmups)\n",
            self.preset, self.template_len, self.config.iterations, self.config.warmups
        );
        let _ = writeln!(s, "{:<8} {:>14} {:>12}", "op", "median (us)", "vs Add");
        for e in &self.entries {
            let _ = writeln!(s, "{:<8} {:>14.3} {:>12.3}", e.op, e.median_ns / 1e3, e.normalized);
        }
        let _ = writeln!(s, "rotation share of inner product: {:.1}%", 100.0 * self.rotation_share);
        s
    }
}

/// Key material and fixtures shared by the benchmarks.
pub struct BenchFixture {
    pub evaluator: Evaluator,
    pub public_key: PublicKey,
    pub secret_key: hefuse_ckks::SecretKey,
    pub eval_keys: EvaluationKeys,
    pub layout: PackedLayout,
    rng: ChaCha20Rng,
}

fn unit_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

impl BenchFixture {
    /// Generates keys for a two-block layout of `template_len` slots each.
    pub fn new(params: CkksParams, template_len: usize, seed: u64) -> Result<Self, CkksError> {
        let ctx = CkksContext::new(params)?;
        let layout = PackedLayout::new(template_len, 2, ctx.slot_count())?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (secret_key, public_key, eval_keys) = keygen(&ctx, layout.required_rotation_steps(), &mut rng)?;
        Ok(Self {
            evaluator: Evaluator::new(ctx),
            public_key,
            secret_key,
            eval_keys,
            layout,
            rng,
        })
    }

    fn encrypt(&mut self, values: &[f64]) -> Result<Ciphertext, CkksError> {
        self.evaluator.encrypt_values(&self.public_key, values, &mut self.rng)
    }

    /// Median timings of every primitive, normalized to Add.
    pub fn primitives(&mut self, label: &str, config: BenchConfig) -> Result<BenchReport, CkksError> {
        let d = self.layout.template_len();
        let a = unit_vector(d, &mut self.rng);
        let b = unit_vector(d, &mut self.rng);
        let a2 = unit_vector(2 * d, &mut self.rng);
        let b2 = unit_vector(2 * d, &mut self.rng);
        let ev = &self.evaluator;
        let top = ev.context().max_level();
        let pt = ev.encode(&a, DEFAULT_SCALE, top)?;
        let ca = self.encrypt(&a)?;
        let cb = self.encrypt(&b)?;
        let ca2 = self.encrypt(&a2)?;
        let cb2 = self.encrypt(&b2)?;
        let ev = &self.evaluator;
        let (pk, sk, evk) = (&self.public_key, &self.secret_key, &self.eval_keys);
        let mut rng = self.rng.clone();

        let raw = vec![
            ("Ecd", median_time(config, || ev.encode(&a, DEFAULT_SCALE, top))),
            ("Dcd", median_time(config, || ev.decode(&pt))),
            ("Enc", median_time(config, || ev.encrypt(pk, &pt, &mut rng))),
            ("Dec", median_time(config, || ev.decrypt(sk, &ca))),
            ("Add", median_time(config, || ev.add(&ca, &cb))),
            ("Mul", median_time(config, || ev.multiply(&ca, &cb))),
            ("Rot1", median_time(config, || ev.rotate(&ca, 1, evk))),
            ("IP_d", median_time(config, || inner_product(ev, &ca, &cb, evk))),
            ("IP_2d", median_time(config, || inner_product(ev, &ca2, &cb2, evk))),
        ];
        let rotation_share = rotation_share(ev, &ca, &cb, evk, config)?;

        let add = raw[4].1;
        Ok(BenchReport {
            preset: label.to_string(),
            template_len: d,
            config,
            entries: raw
                .into_iter()
                .map(|(op, ns)| BenchEntry {
                    op: op.to_string(),
                    median_ns: ns,
                    normalized: ns / add,
                })
                .collect(),
            rotation_share,
        })
    }

    /// Stage-2 incremental update against a fresh fused comparison.
    pub fn incremental_vs_naive(&mut self, config: BenchConfig) -> Result<IncrementalComparison, CkksError> {
        let d = self.layout.template_len();
        let reference = unit_vector(2 * d, &mut self.rng);
        let probe = unit_vector(2 * d, &mut self.rng);
        let c_ref = self.encrypt(&reference)?;
        let c_probe1 = self.encrypt(&probe[..d])?;
        let c_probe2 = self.encrypt(&probe[d..])?;
        let c_fused = self.encrypt(&probe)?;
        let ev = &self.evaluator;
        let evk = &self.eval_keys;
        let layout = &self.layout;
        let stage1 = inner_product(ev, &c_ref, &c_probe1, evk)?;

        let incremental = || -> Result<Ciphertext, CkksError> {
            let aligned = realign(ev, &c_ref, 1, 2, layout, evk)?;
            let ip = inner_product(ev, &aligned, &c_probe2, evk)?;
            accumulate_score(ev, Some(&stage1), &ip)
        };
        let naive = || inner_product(ev, &c_ref, &c_fused, evk);

        let before = ev.counts();
        let inc_ct = incremental()?;
        let incremental_ops = ev.counts() - before;
        let before = ev.counts();
        let naive_ct = naive()?;
        let naive_ops = ev.counts() - before;

        let expected: f64 = reference.iter().zip(&probe).map(|(x, y)| x * y).sum();
        let inc_val = ev.decrypt_values(&self.secret_key, &inc_ct)?[0];
        let naive_val = ev.decrypt_values(&self.secret_key, &naive_ct)?[0];

        Ok(IncrementalComparison {
            template_len: d,
            incremental_ops,
            naive_ops,
            incremental_ns: median_time(config, incremental),
            naive_ns: median_time(config, naive),
            incremental_error: (inc_val - expected).abs(),
            naive_error: (naive_val - expected).abs(),
        })
    }
}

/// Share of inner-product time spent inside rotations, measured by timing
/// each phase of the same computation the library runs.
fn rotation_share(
    ev: &Evaluator,
    a: &Ciphertext,
    b: &Ciphertext,
    evk: &EvaluationKeys,
    config: BenchConfig,
) -> Result<f64, CkksError> {
    let steps = power_of_two_steps(ev.context().slot_count());
    let run = || -> Result<f64, CkksError> {
        let mut rot = 0.0;
        let start = Instant::now();
        let mut acc = ev.mul(a, b, evk)?;
        for &s in &steps {
            let t = Instant::now();
            let r = ev.rotate(&acc, s as i64, evk)?;
            rot += t.elapsed().as_nanos() as f64;
            acc = ev.add(&acc, &r)?;
        }
        black_box(&acc);
        Ok(rot / start.elapsed().as_nanos() as f64)
    };
    for _ in 0..config.warmups {
        run()?;
    }
    let mut shares = (0..config.iterations.max(1)).map(|_| run()).collect::<Result<Vec<_>, _>>()?;
    Ok(median(&mut shares))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementalComparison {
    pub template_len: usize,
    #[serde(serialize_with = "ser_counts")]
    pub incremental_ops: OpCounts,
    #[serde(serialize_with = "ser_counts")]
    pub naive_ops: OpCounts,
    pub incremental_ns: f64,
    pub naive_ns: f64,
    pub incremental_error: f64,
    pub naive_error: f64,
}

fn ser_counts<S: serde::Serializer>(c: &OpCounts, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(4))?;
    m.serialize_entry("rotate", &c.rotate)?;
    m.serialize_entry("mul", &c.mul)?;
    m.serialize_entry("add", &c.add)?;
    m.serialize_entry("total", &c.homomorphic_ops())?;
    m.end()
}

impl IncrementalComparison {
    /// Rotations plus ciphertext multiplications of the incremental path.
    pub fn incremental_heavy_ops(&self) -> u64 {
        self.incremental_ops.rotate + self.incremental_ops.mul
    }

    pub fn to_table(&self) -> String {
        let row = |name: &str, c: &OpCounts, ns: f64| {
            format!(
                "{:<12} {:>5} {:>5} {:>5} {:>7} {:>14.3}\n",
                name,
                c.rotate,
                c.mul,
                c.add,
                c.homomorphic_ops(),
                ns / 1e3
            )
        };
        let mut s = format!("stage-2 update, d = {}\n", self.template_len);
        let _ = writeln!(s, "{:<12} {:>5} {:>5} {:>5} {:>7} {:>14}", "path", "rot", "mul", "add", "total", "median (us)");
        s += &row("incremental", &self.incremental_ops, self.incremental_ns);
        s += &row("fused", &self.naive_ops, self.naive_ns);
        let _ = writeln!(s, "time ratio incremental/fused: {:.3}", self.incremental_ns / self.naive_ns);
        s
    }
}
