use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    Malformed,
}

impl Answer {
    /// Case-insensitive "yes"/"no"; anything else is malformed.
    pub fn from_label(s: &str) -> Answer {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Answer::Yes,
            "no" => Answer::No,
            _ => Answer::Malformed,
        }
    }
}

/// A model's verdict on one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub answer: Answer,
    /// Empty when malformed.
    pub reason: String,
    pub raw_output: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub retries: u32,
}

impl Judgment {
    pub fn malformed(raw: &str) -> Self {
        Judgment {
            answer: Answer::Malformed,
            reason: String::new(),
            raw_output: raw.to_string(),
            latency_ms: 0,
            model_id: String::new(),
            retries: 0,
        }
    }
}

/// Recover the verdict from a model reply.
///
/// Takes the first balanced `{...}` region that parses as a JSON object with
/// string fields `answer` and `reason`. Failing that, the reply is retried
/// with curly double quotes made straight and raw line breaks or tabs turned
/// into spaces, which covers wrapped or typeset replies. Never fails: any
/// reply without such an object, or whose answer is neither yes nor no, is
/// [`Answer::Malformed`] with the raw text kept.
pub fn parse_judgment(raw: &str) -> Judgment {
    let found = find_verdict(raw).or_else(|| {
        let relaxed: String = raw
            .chars()
            .map(|c| match c {
                '\u{201c}' | '\u{201d}' => '"',
                '\n' | '\r' | '\t' => ' ',
                c => c,
            })
            .collect();
        (relaxed != raw).then(|| find_verdict(&relaxed)).flatten()
    });
    match found {
        Some((answer @ (Answer::Yes | Answer::No), reason)) => Judgment {
            answer,
            reason,
            raw_output: raw.to_string(),
            latency_ms: 0,
            model_id: String::new(),
            retries: 0,
        },
        _ => Judgment::malformed(raw),
    }
}

fn find_verdict(s: &str) -> Option<(Answer, String)> {
    for (start, _) in s.match_indices('{') {
        let Some(end) = balanced_end(s.as_bytes(), start) else { continue };
        let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&s[start..=end]) else {
            continue;
        };
        if let (Some(Value::String(a)), Some(Value::String(r))) = (map.get("answer"), map.get("reason")) {
            return Some((Answer::from_label(a), r.clone()));
        }
    }
    None
}

/// Index of the `}` closing the `{` at `start`, skipping braces inside JSON
/// string literals.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}
