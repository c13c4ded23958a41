//! Verifiable modular-arithmetic chain tasks.
//!
//! A problem is a start value and a short chain of `+a`, `-a`, `*a` operations
//! evaluated modulo `m`. The ground truth is computed by [`eval_chain`], so
//! every answer is checkable exactly. Hard problems are simplified by folding a
//! prefix of the chain into the start value; medium problems are diversified
//! by algebraic rewrites that keep the answer fixed.

use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpKind {
    Add,
    Sub,
    Mul,
}

impl OpKind {
    pub const ALL: [OpKind; 3] = [OpKind::Add, OpKind::Sub, OpKind::Mul];

    pub fn index(self) -> usize {
        match self {
            OpKind::Add => 0,
            OpKind::Sub => 1,
            OpKind::Mul => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            OpKind::Add => '+',
            OpKind::Sub => '-',
            OpKind::Mul => '*',
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        match c {
            '+' => Some(OpKind::Add),
            '-' => Some(OpKind::Sub),
            '*' => Some(OpKind::Mul),
            _ => None,
        }
    }

    fn is_additive(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Sub)
    }
}

/// One operation of a chain. Serialized as `["ADD", 3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(OpKind, u32)", into = "(OpKind, u32)")]
pub struct OpToken {
    pub kind: OpKind,
    pub operand: u32,
}

impl From<(OpKind, u32)> for OpToken {
    fn from((kind, operand): (OpKind, u32)) -> Self {
        OpToken { kind, operand }
    }
}

impl From<OpToken> for (OpKind, u32) {
    fn from(op: OpToken) -> Self {
        (op.kind, op.operand)
    }
}

impl OpToken {
    pub fn add(operand: u32) -> Self {
        OpToken {
            kind: OpKind::Add,
            operand,
        }
    }

    pub fn sub(operand: u32) -> Self {
        OpToken {
            kind: OpKind::Sub,
            operand,
        }
    }

    pub fn mul(operand: u32) -> Self {
        OpToken {
            kind: OpKind::Mul,
            operand,
        }
    }

    /// Applies the operation to `value` modulo `m`. Both inputs must be `< m`.
    pub fn apply(self, value: u32, m: u32) -> u32 {
        let (v, a, m) = (value as u64, self.operand as u64, m as u64);
        let out = match self.kind {
            OpKind::Add => (v + a) % m,
            OpKind::Sub => (v + m - a) % m,
            OpKind::Mul => (v * a) % m,
        };
        out as u32
    }

    /// Row index of this token in an op vocabulary of size `3 * m`.
    pub fn vocab_index(self, m: u32) -> usize {
        self.kind.index() * m as usize + self.operand as usize
    }

    /// The additive inverse rewrite: `+a` becomes `-(m-a)` and vice versa.
    fn flipped(self, m: u32) -> Self {
        let operand = (m - self.operand) % m;
        match self.kind {
            OpKind::Add => OpToken::sub(operand),
            OpKind::Sub => OpToken::add(operand),
            OpKind::Mul => self,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lineage {
    Original,
    Simplified(String),
    Diversified(String),
}

impl Lineage {
    pub fn origin_id(&self) -> Option<&str> {
        match self {
            Lineage::Original => None,
            Lineage::Simplified(id) | Lineage::Diversified(id) => Some(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRecord")]
pub struct Problem {
    pub id: String,
    #[serde(rename = "m")]
    pub modulus: u32,
    pub start: u32,
    pub ops: Vec<OpToken>,
    pub answer: u32,
    pub lineage: Lineage,
    pub surface_seed: u64,
}

#[derive(Deserialize)]
struct ProblemRecord {
    id: String,
    m: u32,
    start: u32,
    ops: Vec<OpToken>,
    answer: u32,
    lineage: Lineage,
    surface_seed: u64,
}

impl TryFrom<ProblemRecord> for Problem {
    type Error = Error;

    fn try_from(r: ProblemRecord) -> Result<Self> {
        let p = Problem::new(r.id, r.m, r.start, r.ops, r.lineage, r.surface_seed)?;
        if p.answer != r.answer {
            return Err(Error::Input(format!(
                "problem {}: stored answer {} does not match chain value {}",
                p.id, r.answer, p.answer
            )));
        }
        Ok(p)
    }
}

impl Problem {
    /// Builds a problem, computing its answer from the chain.
    pub fn new(
        id: impl Into<String>,
        modulus: u32,
        start: u32,
        ops: Vec<OpToken>,
        lineage: Lineage,
        surface_seed: u64,
    ) -> Result<Self> {
        let id = id.into();
        if modulus < 2 {
            return Err(Error::Input(format!("problem {id}: modulus {modulus} < 2")));
        }
        if start >= modulus {
            return Err(Error::Input(format!(
                "problem {id}: start {start} not below modulus {modulus}"
            )));
        }
        if ops.is_empty() {
            return Err(Error::Input(format!("problem {id}: empty op chain")));
        }
        if let Some(op) = ops.iter().find(|op| op.operand >= modulus) {
            return Err(Error::Input(format!(
                "problem {id}: operand {} not below modulus {modulus}",
                op.operand
            )));
        }
        let answer = fold(start, &ops, modulus);
        Ok(Problem {
            id,
            modulus,
            start,
            ops,
            answer,
            lineage,
            surface_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// The value held after each operation, ending with the answer.
    pub fn intermediate_values(&self) -> Vec<u32> {
        let mut v = self.start;
        self.ops
            .iter()
            .map(|op| {
                v = op.apply(v, self.modulus);
                v
            })
            .collect()
    }
}

fn fold(start: u32, ops: &[OpToken], m: u32) -> u32 {
    ops.iter().fold(start, |v, op| op.apply(v, m))
}

/// Ground-truth oracle: left fold of the chain over the start value.
pub fn eval_chain(problem: &Problem) -> u32 {
    fold(problem.start, &problem.ops, problem.modulus)
}

/// Outcome check on the final answer only.
pub fn verify(claimed: u32, problem: &Problem) -> Result<bool> {
    if claimed >= problem.modulus {
        return Err(Error::Input(format!(
            "claimed answer {claimed} outside [0, {})",
            problem.modulus
        )));
    }
    Ok(claimed == problem.answer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub modulus: u32,
    /// Inclusive `[min, max]` chain length.
    pub length_range: (usize, usize),
    /// Relative weights of ADD, SUB, MUL.
    pub op_mix: [f64; 3],
    pub max_chain_length: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            modulus: 10,
            length_range: (2, 6),
            op_mix: [1.0, 1.0, 1.0],
            max_chain_length: 8,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.length_range;
        if self.modulus < 2 {
            return Err(Error::Config(format!(
                "env.modulus: must be >= 2, got {}",
                self.modulus
            )));
        }
        if lo < 1 || lo > hi {
            return Err(Error::Config(format!(
                "env.length_range: need 1 <= min <= max, got [{lo}, {hi}]"
            )));
        }
        if hi > self.max_chain_length {
            return Err(Error::Config(format!(
                "env.length_range: max {hi} exceeds max_chain_length {}",
                self.max_chain_length
            )));
        }
        if self.op_mix.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.op_mix.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config(
                "env.op_mix: weights must be finite, non-negative, and not all zero".into(),
            ));
        }
        Ok(())
    }

    fn sample_kind(&self, rng: &mut Rng) -> OpKind {
        let total: f64 = self.op_mix.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        for (kind, w) in OpKind::ALL.iter().zip(self.op_mix) {
            if x < w {
                return *kind;
            }
            x -= w;
        }
        // rounding at the top of the range
        *OpKind::ALL
            .iter()
            .zip(self.op_mix)
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(k, _)| k)
            .unwrap_or(&OpKind::Add)
    }
}

pub fn generate_problem(id: impl Into<String>, rng: &mut Rng, cfg: &GenConfig) -> Result<Problem> {
    cfg.validate()?;
    let m = cfg.modulus;
    let (lo, hi) = cfg.length_range;
    let start = rng.gen_range(0..m);
    let len = rng.gen_range(lo..=hi);
    let ops = (0..len)
        .map(|_| {
            let kind = cfg.sample_kind(rng);
            OpToken {
                kind,
                operand: rng.gen_range(0..m),
            }
        })
        .collect();
    let surface_seed = rng.gen();
    Problem::new(id, m, start, ops, Lineage::Original, surface_seed)
}

/// Default prefix length folded by [`simplify`]: `ceil(L / 2)`.
pub fn default_simplify_prefix(len: usize) -> usize {
    len.div_ceil(2)
}

/// Folds the first `k` operations into the start value.
///
/// `k` defaults to `ceil(L/2)` and must leave at least one operation.
pub fn simplify(problem: &Problem, rng: &mut Rng, k: Option<usize>) -> Result<Problem> {
    let len = problem.len();
    if len < 2 {
        return Err(Error::NotSimplifiable {
            id: problem.id.clone(),
        });
    }
    let k = k.unwrap_or_else(|| default_simplify_prefix(len));
    if k < 1 || k >= len {
        return Err(Error::Input(format!(
            "simplify prefix {k} outside [1, {}] for problem {}",
            len - 1,
            problem.id
        )));
    }
    let m = problem.modulus;
    let start = fold(problem.start, &problem.ops[..k], m);
    Problem::new(
        format!("{}:s", problem.id),
        m,
        start,
        problem.ops[k..].to_vec(),
        Lineage::Simplified(problem.id.clone()),
        rng.gen(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diversified {
    pub problem: Problem,
    /// Only the surface seed changed; the chain had no additive op to rewrite.
    pub surface_only: bool,
}

/// Rewrites the chain into an equivalent one of the same length.
///
/// Applies a random number of rewrites drawn from: flipping `+a` into
/// `-(m-a)` (or back), and swapping adjacent additive ops. The surface seed
/// is always refreshed. Chains with no additive op only get a new seed.
pub fn diversify(problem: &Problem, rng: &mut Rng) -> Result<Diversified> {
    let m = problem.modulus;
    let mut ops = problem.ops.clone();
    let flips: Vec<usize> = (0..ops.len())
        .filter(|&i| ops[i].kind.is_additive())
        .collect();
    let swaps: Vec<usize> = (0..ops.len().saturating_sub(1))
        .filter(|&i| ops[i].kind.is_additive() && ops[i + 1].kind.is_additive())
        .collect();

    let surface_only = flips.is_empty();
    if !surface_only {
        let choices = flips.len() + swaps.len();
        let n_rewrites = rng.gen_range(1..=ops.len());
        for _ in 0..n_rewrites {
            let c = rng.gen_range(0..choices);
            if c < flips.len() {
                let i = flips[c];
                ops[i] = ops[i].flipped(m);
            } else {
                let i = swaps[c - flips.len()];
                ops.swap(i, i + 1);
            }
        }
        if ops == problem.ops {
            // rewrites cancelled out; a single flip always changes the chain
            let i = flips[rng.gen_range(0..flips.len())];
            ops[i] = ops[i].flipped(m);
        }
    }

    let problem = Problem::new(
        format!("{}:d", problem.id),
        m,
        problem.start,
        ops,
        Lineage::Diversified(problem.id.clone()),
        rng.gen(),
    )?;
    Ok(Diversified {
        problem,
        surface_only,
    })
}

/// Text layout of a rendered problem. Picked by `surface_seed % 4`.
const LAYOUTS: u64 = 4;

/// Renders the problem as text, e.g. `mod 10: 2 +3 *2 = ?`.
///
/// The surface seed picks the spacing and whether the modulus annotation
/// leads or trails; the token sequence is the same for every layout.
pub fn render(problem: &Problem) -> String {
    let layout = problem.surface_seed % LAYOUTS;
    let spaced = layout % 2 == 1;
    let mut body = problem.start.to_string();
    for op in &problem.ops {
        body.push(' ');
        body.push(op.kind.symbol());
        if spaced {
            body.push(' ');
        }
        body.push_str(&op.operand.to_string());
    }
    if layout < 2 {
        format!("mod {}: {} = ?", problem.modulus, body)
    } else {
        format!("{} = ? (mod {})", body, problem.modulus)
    }
}

/// Chain content recovered from rendered text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedChain {
    pub modulus: u32,
    pub start: u32,
    pub ops: Vec<OpToken>,
}

impl ParsedChain {
    pub fn matches(&self, problem: &Problem) -> bool {
        self.modulus == problem.modulus && self.start == problem.start && self.ops == problem.ops
    }
}

pub fn parse(text: &str) -> Result<ParsedChain> {
    let bad = |why: &str| Error::Input(format!("cannot parse {text:?}: {why}"));
    let text = text.trim();
    let (modulus, body) = if let Some(rest) = text.strip_prefix("mod ") {
        let (m, body) = rest.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        (m.trim(), body)
    } else {
        let (body, tail) = text.rsplit_once("(mod ").ok_or_else(|| bad("missing modulus"))?;
        let m = tail.strip_suffix(')').ok_or_else(|| bad("missing ')'"))?;
        (m.trim(), body)
    };
    let modulus: u32 = modulus.parse().map_err(|_| bad("bad modulus"))?;
    let body = body.trim();
    let body = body
        .strip_suffix('?')
        .and_then(|b| b.trim_end().strip_suffix('='))
        .ok_or_else(|| bad("missing '= ?'"))?;
    let compact: String = body.chars().filter(|c| !c.is_whitespace()).collect();

    let mut chars = compact.chars().peekable();
    let number = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| -> Result<u32> {
        let mut digits = String::new();
        while let Some(c) = chars.peek().copied().filter(char::is_ascii_digit) {
            digits.push(c);
            chars.next();
        }
        digits.parse().map_err(|_| bad("expected a number"))
    };
    let start = number(&mut chars)?;
    let mut ops = Vec::new();
    while let Some(c) = chars.next() {
        let kind = OpKind::from_symbol(c).ok_or_else(|| bad("unknown operator"))?;
        ops.push(OpToken {
            kind,
            operand: number(&mut chars)?,
        });
    }
    Ok(ParsedChain {
        modulus,
        start,
        ops,
    })
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

/// Writes problems as one JSON object per line.
pub fn write_fixtures(path: &Path, problems: &[Problem]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in problems {
        let line = serde_json::to_string(p).map_err(|e| Error::json("problem fixture", e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_fixtures(path: &Path) -> Result<Vec<Problem>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), n + 1), e))?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn chain(m: u32, start: u32, ops: Vec<OpToken>) -> Problem {
        Problem::new("p", m, start, ops, Lineage::Original, 0).unwrap()
    }

    #[test]
    fn eval_chain_examples() {
        assert_eq!(eval_chain(&chain(10, 2, vec![OpToken::add(3), OpToken::mul(2)])), 0);
        assert_eq!(eval_chain(&chain(2, 1, vec![OpToken::add(1)])), 0);
        assert_eq!(eval_chain(&chain(10, 7, vec![OpToken::add(0)])), 7);
        assert_eq!(eval_chain(&chain(10, 2, vec![OpToken::add(3), OpToken::add(4)])), 9);
        assert_eq!(eval_chain(&chain(10, 2, vec![OpToken::sub(7)])), 5);
    }

    #[test]
    fn empty_chain_is_rejected() {
        assert!(Problem::new("p", 10, 7, vec![], Lineage::Original, 0).is_err());
        assert!(Problem::new("p", 10, 10, vec![OpToken::add(1)], Lineage::Original, 0).is_err());
        assert!(Problem::new("p", 10, 1, vec![OpToken::add(10)], Lineage::Original, 0).is_err());
        assert!(Problem::new("p", 1, 0, vec![OpToken::add(0)], Lineage::Original, 0).is_err());
    }

    #[test]
    fn verify_checks_final_answer() {
        let p = chain(10, 2, vec![OpToken::add(3), OpToken::mul(2)]);
        assert!(verify(0, &p).unwrap());
        assert!(!verify(5, &p).unwrap());
        assert!(verify(10, &p).is_err());
    }

    #[test]
    fn generate_respects_contract() {
        let cfg = GenConfig {
            modulus: 10,
            length_range: (2, 2),
            op_mix: [1.0, 0.0, 1.0],
            ..GenConfig::default()
        };
        let mut r = rng::from_seed(0);
        let p = generate_problem("g0", &mut r, &cfg).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.answer < 10);
        assert_eq!(p.lineage, Lineage::Original);
        assert!(p.ops.iter().all(|op| op.kind != OpKind::Sub));

        let again = generate_problem("g0", &mut rng::from_seed(0), &cfg).unwrap();
        assert_eq!(p, again);
        assert_eq!(render(&p), render(&again));
    }

    #[test]
    fn generate_rejects_bad_ranges() {
        let mut r = rng::from_seed(0);
        for range in [(3, 2), (0, 2), (2, 9)] {
            let cfg = GenConfig {
                length_range: range,
                ..GenConfig::default()
            };
            assert!(matches!(
                generate_problem("x", &mut r, &cfg),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn simplify_examples() {
        let mut r = rng::from_seed(1);
        let p = chain(10, 2, vec![OpToken::add(3), OpToken::mul(2)]);
        let s = simplify(&p, &mut r, Some(1)).unwrap();
        assert_eq!(s.start, 5);
        assert_eq!(s.ops, vec![OpToken::mul(2)]);
        assert_eq!(s.answer, 0);
        assert_eq!(s.lineage, Lineage::Simplified("p".into()));

        let p = chain(10, 2, vec![OpToken::add(3), OpToken::add(4), OpToken::sub(1)]);
        let s = simplify(&p, &mut r, Some(2)).unwrap();
        assert_eq!(s.start, 9);
        assert_eq!(s.ops, vec![OpToken::sub(1)]);
        assert_eq!(s.answer, 8);

        // default k = ceil(3/2) = 2
        assert_eq!(simplify(&p, &mut r, None).unwrap().len(), 1);
        assert!(simplify(&p, &mut r, Some(3)).is_err());
        assert!(simplify(&p, &mut r, Some(0)).is_err());
    }

    #[test]
    fn single_op_is_not_simplifiable() {
        let p = chain(10, 2, vec![OpToken::add(3)]);
        assert!(matches!(
            simplify(&p, &mut rng::from_seed(0), None),
            Err(Error::NotSimplifiable { .. })
        ));
    }

    #[test]
    fn diversify_examples() {
        let p = chain(10, 2, vec![OpToken::add(3), OpToken::add(4)]);
        let swapped = chain(10, 2, vec![OpToken::add(4), OpToken::add(3)]);
        assert_eq!(swapped.answer, 9);
        assert_ne!(p.intermediate_values()[0], swapped.intermediate_values()[0]);

        let flipped = chain(10, 2, vec![OpToken::sub(7)]);
        assert_eq!(flipped.answer, chain(10, 2, vec![OpToken::add(3)]).answer);

        let d = diversify(&p, &mut rng::from_seed(3)).unwrap();
        assert!(!d.surface_only);
        assert_ne!(d.problem.ops, p.ops);
        assert_eq!(d.problem.answer, 9);
        assert_eq!(d.problem.lineage, Lineage::Diversified("p".into()));

        let mul = chain(10, 2, vec![OpToken::mul(2)]);
        let d = diversify(&mul, &mut rng::from_seed(3)).unwrap();
        assert!(d.surface_only);
        assert_eq!(d.problem.ops, mul.ops);
        assert_ne!(d.problem.surface_seed, mul.surface_seed);
    }

    #[test]
    fn render_canonical_and_layouts() {
        let p = chain(10, 2, vec![OpToken::add(3), OpToken::mul(2)]);
        assert_eq!(render(&p), "mod 10: 2 +3 *2 = ?");
        let renders: Vec<String> = (0..4)
            .map(|s| {
                let mut q = p.clone();
                q.surface_seed = s;
                render(&q)
            })
            .collect();
        assert_eq!(renders[1], "mod 10: 2 + 3 * 2 = ?");
        assert_eq!(renders[2], "2 +3 *2 = ? (mod 10)");
        assert_eq!(renders[3], "2 + 3 * 2 = ? (mod 10)");
        for r in &renders {
            assert!(parse(r).unwrap().matches(&p));
        }
    }

    #[test]
    fn fixture_json_shape() {
        let p = chain(10, 2, vec![OpToken::add(3), OpToken::mul(2)]);
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "id": "p", "m": 10, "start": 2, "ops": [["ADD", 3], ["MUL", 2]],
                "answer": 0, "lineage": "Original", "surface_seed": 0
            })
        );
        let back: Problem = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);

        let tampered = serde_json::json!({
            "id": "p", "m": 10, "start": 2, "ops": [["ADD", 3]],
            "answer": 4, "lineage": "Original", "surface_seed": 0
        });
        assert!(serde_json::from_value::<Problem>(tampered).is_err());
    }

    #[test]
    fn fixture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let cfg = GenConfig::default();
        let mut r = rng::from_seed(5);
        let problems: Vec<Problem> = (0..20)
            .map(|i| generate_problem(format!("f{i}"), &mut r, &cfg).unwrap())
            .collect();
        let mut with_lineage = problems.clone();
        with_lineage.push(simplify(&problems[0], &mut r, None).unwrap());
        write_fixtures(&path, &with_lineage).unwrap();
        assert_eq!(read_fixtures(&path).unwrap(), with_lineage);
    }

    fn arb_problem() -> impl Strategy<Value = Problem> {
        (2u32..20, 1usize..9, any::<u64>()).prop_flat_map(|(m, len, seed)| {
            (
                0..m,
                prop::collection::vec((0usize..3, 0..m), len),
                Just(m),
                Just(seed),
            )
                .prop_map(|(start, raw, m, seed)| {
                    let ops = raw
                        .into_iter()
                        .map(|(k, a)| OpToken {
                            kind: OpKind::ALL[k],
                            operand: a,
                        })
                        .collect();
                    Problem::new("q", m, start, ops, Lineage::Original, seed).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn fold_splits_at_every_point(p in arb_problem()) {
            for k in 0..=p.len() {
                let mid = fold(p.start, &p.ops[..k], p.modulus);
                prop_assert_eq!(fold(mid, &p.ops[k..], p.modulus), p.answer);
            }
        }

        #[test]
        fn rewrites_preserve_answer(p in arb_problem(), seed in any::<u64>()) {
            let mut r = rng::from_seed(seed);
            let d = diversify(&p, &mut r).unwrap();
            prop_assert_eq!(d.problem.len(), p.len());
            prop_assert_eq!(eval_chain(&d.problem), p.answer);
            if p.len() >= 2 {
                let s = simplify(&p, &mut r, None).unwrap();
                prop_assert!(s.len() < p.len());
                prop_assert_eq!(eval_chain(&s), p.answer);
            }
        }

        #[test]
        fn render_parse_round_trip(p in arb_problem()) {
            prop_assert!(parse(&render(&p)).unwrap().matches(&p));
        }
    }
}
