//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each check also has a wall-clock budget.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use relext_core::evaluation::{harmonic_mean, metrics, ConfusionMatrix, Label};
use relext_core::retrieval::{chunk_for_candidate, retrieve_top_k, Chunk, EmbeddingVector, RetrievalConfig};
use relext_core::thesaurus::Thesaurus;
use relext_core::{build_matcher, cohen_kappa, parse_judgment, Answer};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 9] = [
        ("metric reproduction", Duration::from_secs(1), metric_reproduction),
        ("F1 harmonic-mean consistency", Duration::from_secs(1), f1_consistency),
        ("matcher oracle equivalence", Duration::from_secs(30), matcher_equivalence),
        ("chunking invariants", Duration::from_secs(10), chunking_invariants),
        ("retrieval contract", Duration::from_secs(5), retrieval_contract),
        ("kappa properties", Duration::from_secs(5), kappa_properties),
        ("end-to-end golden run", Duration::from_secs(30), golden_run),
        ("resume safety", Duration::from_secs(30), resume_safety),
        ("judgment parsing totality", Duration::from_secs(10), parse_totality),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; over budget")),
            r => r,
        };
        let timing = format!("{:.2}s of {}s", elapsed.as_secs_f64(), budget.as_secs());
        match result {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} ({timing})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail} ({timing})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}

// ---------------------------------------------------------------- metrics

fn thousandths(x: f64) -> i64 {
    (x * 1000.0 + 0.5).floor() as i64
}

fn metric_reproduction() -> Check {
    let n = 155u64;
    let mut solutions = Vec::new();
    for tp in 0..=n {
        for fp in 0..=n - tp {
            if tp + fp == 0 || thousandths(tp as f64 / (tp + fp) as f64) != 950 {
                continue;
            }
            for fn_ in 0..=n - tp - fp {
                let tn = n - tp - fp - fn_;
                let (t, p, f, e) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
                if tp + fn_ == 0 {
                    continue;
                }
                let precision = t / (t + p);
                let recall = t / (t + f);
                let f1 = 2.0 * precision * recall / (precision + recall);
                if thousandths((t + e) / n as f64) == 800 && thousandths(recall) == 821 && thousandths(f1) == 881 {
                    solutions.push((tp, fp, fn_, tn));
                }
            }
        }
    }
    ensure(solutions == [(115, 6, 25, 9)], || format!("search found {solutions:?}"))?;
    let m = metrics(&ConfusionMatrix::new(115, 6, 25, 9)).map_err(|e| e.to_string())?;
    let shown = [m.accuracy.display(), m.recall.display(), m.precision.display(), m.f1.display()];
    ensure(shown == ["0.800", "0.821", "0.950", "0.881"], || format!("metrics displayed {shown:?}"))?;
    Ok("unique matrix tp=115 fp=6 fn=25 tn=9 renders 0.800/0.821/0.950/0.881".into())
}

fn f1_consistency() -> Check {
    // (precision, recall, reported F1)
    let rows = [
        ("GPT-4", 0.950, 0.821, 0.881),
        ("GPT-3.5", 0.914, 0.686, 0.784),
        ("Llama2 70B", 0.945, 0.736, 0.827),
        ("Llama2 13B", 0.920, 0.493, 0.642),
        ("Llama2 7B", 0.898, 0.693, 0.782),
        ("SOLAR 70B", 0.909, 0.857, 0.882),
    ];
    let mut worst = 0.0f64;
    for (model, p, r, f1) in rows {
        let got = harmonic_mean(p, r);
        let oracle = 2.0 / (1.0 / p + 1.0 / r);
        ensure((got - oracle).abs() < 1e-12, || format!("{model}: harmonic_mean {got} vs {oracle}"))?;
        let dev = (got - f1).abs();
        ensure(dev <= 0.001 + 1e-12, || format!("{model}: {got:.4} vs reported {f1}"))?;
        worst = worst.max(dev);
    }
    Ok(format!("6 rows, largest deviation {worst:.5}"))
}

// ---------------------------------------------------------------- matcher

const WORDS: &[&str] = &["ab", "Ab", "AB", "abc", "b", "ca", "bab", "cAb", "a1", "é", "É", "éa", "naïve", "Naïve", "x"];
const SEPARATORS: &[&str] = &[" ", " ", " ", "  ", "-", ", ", "||", "|1|", "|2|", "|3|", "|4|", "\n", "(", ")", "é"];

fn random_term(rng: &mut StdRng) -> String {
    let n = rng.random_range(1..=3);
    let sep = if rng.random_bool(0.2) { "-" } else { " " };
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(sep)
}

fn random_text(rng: &mut StdRng) -> String {
    let target = rng.random_range(0..=2000);
    let mut out = String::new();
    let mut chars = 0;
    loop {
        let piece = if rng.random_bool(0.55) { WORDS.choose(rng) } else { SEPARATORS.choose(rng) }.unwrap();
        let len = piece.chars().count();
        if chars + len > target {
            break;
        }
        out.push_str(piece);
        chars += len;
    }
    out
}

fn mask_markers(chars: &[char]) -> Vec<char> {
    let mut out = chars.to_vec();
    let mut i = 0;
    while i < out.len() {
        if out[i] == '|' && out.get(i + 1) == Some(&'|') {
            out[i] = ' ';
            out[i + 1] = ' ';
            i += 2;
        } else if out[i] == '|' && matches!(out.get(i + 1), Some('1'..='3')) && out.get(i + 2) == Some(&'|') {
            out[i..i + 3].fill(' ');
            i += 3;
        } else {
            i += 1;
        }
    }
    out
}

/// Scans characters: at each word start take the longest surface ending on a
/// word boundary, then jump past it. Returns byte spans and surfaces.
fn naive_longest_match(dict: &[String], text: &str) -> Vec<(usize, usize, String)> {
    let orig: Vec<(usize, char)> = text.char_indices().collect();
    let chars: Vec<char> = orig.iter().map(|&(_, c)| c).collect();
    let masked = mask_markers(&chars);
    let lower: Vec<char> = masked.iter().map(|c| c.to_lowercase().next().unwrap()).collect();
    let byte_at = |i: usize| orig.get(i).map_or(text.len(), |&(b, _)| b);
    let dict: Vec<Vec<char>> = dict.iter().map(|d| d.chars().collect()).collect();
    let word = |i: usize| masked.get(i).is_some_and(|c| c.is_alphanumeric());
    let mut out = Vec::new();
    let mut p = 0;
    while p < lower.len() {
        if p > 0 && word(p - 1) {
            p += 1;
            continue;
        }
        let best = dict
            .iter()
            .filter(|d| lower[p..].starts_with(d) && !word(p + d.len()))
            .max_by_key(|d| d.len());
        match best {
            Some(d) => {
                out.push((byte_at(p), byte_at(p + d.len()), d.iter().collect()));
                p += d.len();
            }
            None => p += 1,
        }
    }
    out
}

fn matcher_equivalence() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    let mut total_matches = 0;
    for trial in 0..1000 {
        let mut th = Thesaurus::new();
        for i in 0..rng.random_range(1..=50) {
            th.insert(&random_term(&mut rng), &format!("C{i}"), BTreeSet::from(["T".to_string()]));
        }
        if th.is_empty() {
            th.insert("abc", "C0", BTreeSet::from(["T".to_string()]));
        }
        let surfaces: Vec<String> = th.entries().iter().map(|e| e.surface.clone()).collect();
        let automaton = build_matcher(&th).map_err(|e| e.to_string())?;
        let text = random_text(&mut rng);
        let got: Vec<(usize, usize, String)> = automaton
            .match_terms(&text)
            .into_iter()
            .map(|m| (m.byte_span[0], m.byte_span[1], m.surface))
            .collect();
        let want = naive_longest_match(&surfaces, &text);
        ensure(got == want, || format!("trial {trial}: text {text:?} dict {surfaces:?}\n got {got:?}\nwant {want:?}"))?;
        total_matches += want.len();
    }
    Ok(format!("1000 trials, {total_matches} matches, 0 mismatches"))
}

// ---------------------------------------------------------------- retrieval

fn chunking_invariants() -> Check {
    let cfg = RetrievalConfig::default();
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    for case in 0..500 {
        let n = match case % 4 {
            0 => rng.random_range(1..=cfg.anchor_min_words),
            _ => rng.random_range(1..=3000),
        };
        let m = rng.random_range(0..n);
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let text = words.join(if case % 3 == 0 { "\n " } else { " " });
        let chunks = chunk_for_candidate(&text, m, &cfg).map_err(|e| e.to_string())?;
        let ctx = || format!("case {case} (n={n}, m={m})");

        let anchors: Vec<&Chunk> = chunks.iter().filter(|c| c.is_anchor).collect();
        ensure(anchors.len() == 1, || format!("{}: {} anchors", ctx(), anchors.len()))?;
        let [s, e] = anchors[0].word_span;
        ensure(e - s == n.min(cfg.anchor_min_words), || format!("{}: anchor has {} words", ctx(), e - s))?;
        ensure(s <= m && m < e, || format!("{}: anchor {s}..{e} misses the match", ctx()))?;

        let mut covered = vec![false; n];
        for c in &chunks {
            let [s, e] = c.word_span;
            ensure(c.text == words[s..e].join(" "), || format!("{}: chunk text differs from span", ctx()))?;
            ensure(c.is_anchor || e - s <= cfg.chunk_words, || format!("{}: window of {} words", ctx(), e - s))?;
            covered[s..e].iter_mut().for_each(|x| *x = true);
        }
        ensure(covered.iter().all(|&x| x), || format!("{}: words left uncovered", ctx()))?;
        for pair in chunks.windows(2) {
            let (p, q) = (&pair[0], &pair[1]);
            if !p.is_anchor && !q.is_anchor {
                ensure(p.word_span[1] - q.word_span[0] == cfg.overlap_words, || format!("{}: overlap mismatch", ctx()))?;
            }
            ensure(p.word_span[0] < q.word_span[0], || format!("{}: chunks out of order", ctx()))?;
        }
    }
    Ok("500 cases: full coverage, one anchor of min(n, 512) words, windows <= 128 with 32 overlap".into())
}

fn random_vector(rng: &mut StdRng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return EmbeddingVector::new(v).unwrap();
        }
    }
}

fn retrieval_contract() -> Check {
    let cfg = RetrievalConfig::default();
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    for case in 0..200 {
        let n = rng.random_range(1..=40);
        let dim = rng.random_range(2..=16);
        let anchor = rng.random_range(0..n);
        let chunks: Vec<(Chunk, EmbeddingVector)> = (0..n)
            .map(|i| {
                let c = Chunk { text: format!("chunk {i}"), word_span: [i * 96, i * 96 + 128], is_anchor: i == anchor };
                (c, random_vector(&mut rng, dim))
            })
            .collect();
        let query = random_vector(&mut rng, dim);
        let picked = retrieve_top_k(&query, &chunks, &cfg).map_err(|e| e.to_string())?;
        ensure(picked.len() == n.min(cfg.top_k), || format!("case {case}: {} of {n} returned", picked.len()))?;
        ensure(picked.iter().any(|c| c.is_anchor), || format!("case {case}: anchor dropped"))?;

        let scaled: Vec<(Chunk, EmbeddingVector)> =
            chunks.iter().map(|(c, v)| (c.clone(), v.scaled(rng.random_range(0.01..100.0)))).collect();
        let q = query.scaled(rng.random_range(0.01..100.0));
        let again = retrieve_top_k(&q, &scaled, &cfg).map_err(|e| e.to_string())?;
        ensure(again == picked, || format!("case {case}: ranking changed under positive scaling"))?;
    }
    Ok("200 cases: anchor kept, size min(10, n), scale invariant".into())
}

// ---------------------------------------------------------------- kappa

fn labels(bits: &[bool]) -> Vec<Label> {
    bits.iter().map(|&b| if b { Label::Yes } else { Label::No }).collect()
}

/// Contingency-table kappa in floating point.
fn kappa_oracle(a: &[bool], b: &[bool]) -> Option<f64> {
    let n = a.len() as f64;
    let mut t = [[0.0f64; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        t[x as usize][y as usize] += 1.0;
    }
    let po = (t[0][0] + t[1][1]) / n;
    let a1 = (t[1][0] + t[1][1]) / n;
    let b1 = (t[0][1] + t[1][1]) / n;
    let pe = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    (pe < 1.0).then(|| (po - pe) / (1.0 - pe))
}

fn kappa_properties() -> Check {
    let k = |a: &[bool], b: &[bool]| cohen_kappa(&labels(a), &labels(b)).map_err(|e| e.to_string());
    let hand = k(&[true, true, false, false], &[true, false, false, false])?;
    ensure((hand - 0.5).abs() <= 1e-9, || format!("hand case gave {hand}"))?;

    let mut rng = StdRng::seed_from_u64(0x5eed_0006);
    for case in 0..1000 {
        let n = rng.random_range(2..=80);
        let bias_a = rng.random_range(0.05..0.95);
        let bias_b = rng.random_range(0.05..0.95);
        let a: Vec<bool> = (0..n).map(|_| rng.random_bool(bias_a)).collect();
        let b: Vec<bool> = match case % 3 {
            0 => a.iter().map(|&x| if rng.random_bool(0.15) { !x } else { x }).collect(),
            1 => a.iter().map(|&x| if rng.random_bool(0.15) { x } else { !x }).collect(),
            _ => (0..n).map(|_| rng.random_bool(bias_b)).collect(),
        };
        let ab = k(&a, &b)?;
        let ba = k(&b, &a)?;
        ensure(ab.to_bits() == ba.to_bits(), || format!("case {case}: {ab} vs {ba}"))?;
        ensure((-1.0..=1.0).contains(&ab), || format!("case {case}: kappa {ab} out of bounds"))?;
        if let Some(o) = kappa_oracle(&a, &b) {
            ensure((ab - o).abs() <= 1e-9, || format!("case {case}: {ab} vs oracle {o}"))?;
        }
        if a.iter().any(|&x| x) && a.iter().any(|&x| !x) {
            let aa = k(&a, &a)?;
            ensure(aa == 1.0, || format!("case {case}: self agreement {aa}"))?;
        }
    }
    Ok("self agreement 1, exact symmetry, hand case 0.5, 1000 random vectors in [-1, 1]".into())
}

// ---------------------------------------------------------------- end to end

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

struct MockProcess {
    child: Child,
    url: String,
}

impl MockProcess {
    fn spawn(kind: &str, script: &Path, log: Option<&Path>) -> Result<Self, String> {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_relext"));
        cmd.args(["mock-serve", "--kind", kind, "--script"]).arg(script);
        if let Some(log) = log {
            cmd.arg("--log").arg(log);
        }
        let mut child = cmd
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("spawning {kind} mock: {e}"))?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| format!("reading {kind} mock banner: {e}"))?;
        let url = line.trim().strip_prefix("listening on ").ok_or_else(|| format!("unexpected banner {line:?}"))?;
        Ok(MockProcess { url: url.to_string(), child })
    }
}

impl Drop for MockProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn write_config(dir: &Path, chat: &str, embed: &str, concurrency: usize) -> PathBuf {
    let golden = golden_dir();
    let text = fs::read_to_string(golden.join("relext.toml.in"))
        .unwrap()
        .replace("@CHAT_URL@", chat)
        .replace("@EMBED_URL@", embed)
        .replace("@WORKDIR@", &dir.join("work").display().to_string())
        .replace("\"thesaurus.tsv\"", &format!("{:?}", golden.join("thesaurus.tsv").display().to_string()))
        .replace("\"manifest.jsonl\"", &format!("{:?}", golden.join("manifest.jsonl").display().to_string()))
        .replace("concurrency = 4", &format!("concurrency = {concurrency}"));
    let path = dir.join("relext.toml");
    fs::write(&path, text).unwrap();
    path
}

fn relext(config: &Path, workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relext"))
        .arg("--config")
        .arg(config)
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("relext runs")
}

fn succeed(step: &str, out: &Output) -> Result<(), String> {
    ensure(out.status.success(), || {
        format!("{step} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim())
    })
}

/// Full preprocess, match and extract against fresh mock servers.
fn golden_pass(dir: &Path) -> Result<(), String> {
    let golden = golden_dir();
    let chat = MockProcess::spawn("chat", &golden.join("chat_script.json"), None)?;
    let embed = MockProcess::spawn("embed", &golden.join("embed_script.json"), None)?;
    let config = write_config(dir, &chat.url, &embed.url, 4);
    let work = dir.join("work");
    for step in [&["preprocess"][..], &["match"], &["extract", "--deterministic"]] {
        succeed(step[0], &relext(&config, &work, step))?;
    }
    Ok(())
}

fn is_cell(s: &str) -> bool {
    let Some((count, rest)) = s.split_once('(') else { return false };
    let Some(rate) = rest.strip_suffix("%)") else { return false };
    let Some((int, frac)) = rate.split_once('.') else { return false };
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    digits(count) && digits(int) && frac.len() == 1 && digits(frac)
}

fn golden_run() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        fs::create_dir_all(d).unwrap();
        golden_pass(d)?;
    }
    let golden = golden_dir();
    let expected = fs::read(golden.join("expected_triplets.jsonl")).unwrap();
    let first = fs::read(a.join("work/triplets.jsonl")).map_err(|e| e.to_string())?;
    let second = fs::read(b.join("work/triplets.jsonl")).map_err(|e| e.to_string())?;
    ensure(first == expected, || "triplets.jsonl differs from the frozen golden file".into())?;
    ensure(second == first, || "triplets.jsonl differs between runs".into())?;

    let report = fs::read_to_string(a.join("work/report.txt")).unwrap();
    ensure(report == fs::read_to_string(golden.join("expected_report.txt")).unwrap(), || {
        format!("report.txt differs from the frozen report:\n{report}")
    })?;
    let mut cells = 0;
    for line in report.lines().skip(1) {
        for cell in line.split_whitespace().skip(2) {
            ensure(is_cell(cell), || format!("cell `{cell}` is not count(rate%)"))?;
            cells += 1;
        }
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("work/report.json")).unwrap()).map_err(|e| e.to_string())?;
    let sites = summary["report"]["sites"].as_array().ok_or("report.json has no sites")?;
    let mut checked = 0;
    for site in sites {
        for (rel, c) in site["cells"].as_object().ok_or("site without cells")? {
            let n = |k: &str| c[k].as_u64().unwrap_or(u64::MAX);
            ensure(n("positives") + n("negatives") + n("malformed") == n("candidates"), || {
                format!("{} / {rel}: counts do not add up: {c}", site["site_id"])
            })?;
            ensure(is_cell(c["display"].as_str().unwrap_or("")), || format!("bad display {}", c["display"]))?;
            checked += 1;
        }
    }
    let lines = expected.iter().filter(|&&b| b == b'\n').count();
    Ok(format!("{lines} triplets byte-identical across 2 runs, {cells} report cells well formed, {checked} cells conserved"))
}

fn count_lines(path: &Path) -> usize {
    fs::read_to_string(path).map(|s| s.lines().filter(|l| !l.trim().is_empty()).count()).unwrap_or(0)
}

fn resume_safety() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let golden = golden_dir();
    let script = dir.join("slow_chat.json");
    fs::write(&script, r#"{"delay_ms": 150}"#).unwrap();
    let log = dir.join("chat_log.jsonl");
    let chat = MockProcess::spawn("chat", &script, Some(&log))?;
    let embed = MockProcess::spawn("embed", &golden.join("embed_script.json"), None)?;
    let config = write_config(dir, &chat.url, &embed.url, 2);
    let work = dir.join("work");
    succeed("preprocess", &relext(&config, &work, &["preprocess"]))?;
    succeed("match", &relext(&config, &work, &["match"]))?;
    let available = count_lines(&work.join("candidates.jsonl"));
    ensure(available >= 20, || format!("only {available} candidates"))?;

    let mut run = Command::new(env!("CARGO_BIN_EXE_relext"))
        .arg("--config")
        .arg(&config)
        .arg("--workdir")
        .arg(&work)
        .args(["--limit", "20", "extract", "--deterministic"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let deadline = Instant::now() + Duration::from_secs(15);
    while count_lines(&log) < 4 {
        ensure(Instant::now() < deadline, || "chat mock never saw 4 requests".into())?;
        if run.try_wait().map_err(|e| e.to_string())?.is_some() {
            return Err("extraction finished before it could be interrupted".into());
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    Command::new("kill").args(["-TERM", &run.id().to_string()]).status().map_err(|e| e.to_string())?;
    let status = run.wait().map_err(|e| e.to_string())?;
    ensure(status.code() == Some(1), || format!("interrupted run exited {:?}", status.code()))?;
    let first = count_lines(&log);
    let journaled = count_lines(&work.join("journal.jsonl"));
    ensure(first < 20, || format!("interrupt came too late: {first} requests already served"))?;
    ensure(journaled == first, || format!("{first} requests served but {journaled} journaled"))?;

    let out = relext(&config, &work, &["--limit", "20", "extract", "--deterministic"]);
    succeed("resumed extract", &out)?;
    let total = count_lines(&log);
    ensure(total == 20, || format!("{total} chat requests across both runs"))?;
    ensure(count_lines(&work.join("journal.jsonl")) == 20, || "journal does not hold 20 verdicts".into())?;
    Ok(format!("{first} requests before SIGTERM, {} after resume, 20 total", total - first))
}

// ---------------------------------------------------------------- parsing

/// Reply shapes seen from hosted models: curly double quotes, curly or
/// straight single quotes inside the reason, apostrophes, and replies wrapped
/// across lines. Reasons are written for this suite.
const STYLED_ANSWERS: &[(&str, Answer)] = &[
    ("{\u{201c}answer\u{201d}: \u{201c}Yes\u{201d}, \u{201c}reason\u{201d}: \u{201c}Frequent job changes without a plan are listed among the typical behaviors, so employment problems describe the disorder.\u{201d}}", Answer::Yes),
    ("{\u{201c}answer\u{201d}: \u{201c}Yes\u{201d}, \u{201c}reason\u{201d}: \u{201c}Quitting jobs, unpaid bills and defaulting on\n\nloans all show the disregard for obligations that marks the condition.\u{201d}}", Answer::Yes),
    ("{\u{201c}answer\u{201d}: \u{201c}No\u{201d}, \u{201c}reason\u{201d}: \u{201c}The context says nausea is uncommon with this infection, so it is not an informative sign.\u{201d}}", Answer::No),
    ("{\u{201c}answer\u{201d}: \u{201c}No\u{201d}, \u{201c}reason\u{201d}: \u{201c}The word \u{2018}prophylaxis\u{2019} names prevention in general, not a specific drug or procedure.\u{201d}}", Answer::No),
    ("{\u{201c}answer\u{201d}: \u{201c}Yes\u{201d}, \u{201c}reason\u{201d}: \u{201c}Prophylaxis here means giving doxycycline or ciprofloxacin after exposure, which are drugs for the disease.\u{201d}}", Answer::Yes),
    ("{\u{201c}answer\u{201d}: \u{201c}Yes\u{201d}, \u{201c}reason\u{201d}: \u{201c}Contacts receive antibiotics to prevent illness, so the term \u{2018}prophylaxis\u{2019} is an\n\ninformative therapeutic procedure for the disease.\u{201d}}", Answer::Yes),
    (r#"{"answer": "Yes", "reason": "A complete blood count (CBC) shows the low platelets and red cell counts that point to the syndrome, and it tracks the patient's course."}"#, Answer::Yes),
    (r#"{"answer": "Yes", "reason": "The CBC reports cell counts that are abnormal in this syndrome, which makes it useful for diagnosis."}"#, Answer::Yes),
    (r#"{"answer": "No", "reason": "The term 'complete blood count' is a general laboratory panel; on its own it cannot confirm the syndrome."}"#, Answer::No),
    (r#"{"answer": "No", "reason": "The term 'complete blood count' is broad and not specific to this syndrome."}"#, Answer::No),
];

fn fuzz_input(rng: &mut StdRng) -> String {
    const PIECES: &[&str] = &[
        "{", "}", "{{", "}}", "\"", "\u{201c}", "\u{201d}", "\u{2018}", ":", ",", "answer", "reason", "Yes", "no",
        "\"answer\"", "\"reason\"", "\\", "\\u", "\\ud800", "\\udfff", "\\u12", "\\uZZZZ", "\\x00", "\n", " ",
        "null", "[", "]", "\"Yes\"", "é", "\u{feff}", "\u{0}",
    ];
    let valid = r#"{"answer": "Yes", "reason": "the {braces} and \"quotes\" stay é inside"}"#;
    match rng.random_range(0..5) {
        0 => {
            let cut = rng.random_range(0..=valid.len());
            String::from_utf8_lossy(&valid.as_bytes()[..cut]).into_owned()
        }
        1 => {
            let depth = rng.random_range(1..60);
            let inner = if rng.random_bool(0.5) { valid } else { "\"answer\":\"No\"" };
            format!("{}{inner}{}", "{".repeat(depth), "}".repeat(rng.random_range(0..depth + 2)))
        }
        2 => {
            let bytes: Vec<u8> = (0..rng.random_range(0..200)).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        _ => (0..rng.random_range(0..80)).map(|_| *PIECES.choose(rng).unwrap()).collect(),
    }
}

fn parse_totality() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0009);
    let mut malformed = 0;
    for i in 0..10_000 {
        let raw = fuzz_input(&mut rng);
        let j = catch_unwind(AssertUnwindSafe(|| parse_judgment(&raw)))
            .map_err(|_| format!("input {i} panicked: {raw:?}"))?;
        ensure(j.raw_output == raw, || format!("input {i}: raw output not kept"))?;
        if j.answer == Answer::Malformed {
            malformed += 1;
        }
    }
    for (i, (raw, want)) in STYLED_ANSWERS.iter().enumerate() {
        let j = parse_judgment(raw);
        ensure(j.answer == *want && !j.reason.is_empty(), || format!("styled answer {i}: got {:?}", j.answer))?;
    }
    Ok(format!(
        "10000 fuzz inputs without a panic ({malformed} malformed), {} styled answers parsed",
        STYLED_ANSWERS.len()
    ))
}
