mod common;

use std::path::Path;

use common::*;
use gridledger_core::ledger::Ledger;
use proptest::prelude::*;
use serde_json::Value;

fn chain_dir(blocks: usize, per_block: usize, seed: u64) -> tempfile::TempDir {
    let mut fx = Fixture::new(per_block);
    random_workload(&mut fx, blocks * per_block, seed);
    let dir = tempfile::tempdir().unwrap();
    fx.ledger.save(dir.path()).unwrap();
    dir
}

fn is_valid(dir: &Path) -> bool {
    Ledger::load(dir).map(|l| l.validate_chain().is_ok()).unwrap_or(false)
}

fn with_chain_bytes(dir: &Path, bytes: &[u8], f: impl FnOnce(&Path) -> bool) -> bool {
    let path = dir.join("chain.jsonl");
    let original = std::fs::read(&path).unwrap();
    std::fs::write(&path, bytes).unwrap();
    let out = f(dir);
    std::fs::write(&path, original).unwrap();
    out
}

#[test]
fn every_single_bit_flip_is_detected_on_a_small_chain() {
    let dir = chain_dir(3, 2, 21);
    assert!(is_valid(dir.path()));
    let original = std::fs::read(dir.path().join("chain.jsonl")).unwrap();
    let mut flips = 0;
    for i in 0..original.len() {
        for bit in 0..8 {
            let mut bytes = original.clone();
            bytes[i] ^= 1 << bit;
            assert!(
                !with_chain_bytes(dir.path(), &bytes, is_valid),
                "flip of bit {bit} at byte {i} went unnoticed"
            );
            flips += 1;
        }
    }
    assert_eq!(flips, original.len() * 8);
}

fn alternative(key: &str, v: &Value) -> Value {
    let swap = |labels: &[&str], cur: &str| {
        let i = labels.iter().position(|l| *l == cur).unwrap();
        Value::String(labels[(i + 1) % labels.len()].to_string())
    };
    match (key, v) {
        (_, Value::Bool(b)) => Value::Bool(!b),
        (_, Value::Null) => Value::String("sup-1".into()),
        ("latency_ms", Value::Number(n)) => serde_json::json!(n.as_f64().unwrap() + 0.5),
        (_, Value::Number(n)) => serde_json::json!(n.as_u64().unwrap() + 1),
        ("user_role", Value::String(s)) => swap(&["Authority", "Dealer", "Supplier", "Consumer"], s),
        ("transaction_type", Value::String(s)) => swap(&["Buy", "Sell", "Unknown"], s),
        ("security_level", Value::String(s)) => swap(&["Low", "Medium", "High"], s),
        ("network_slice_id", Value::String(s)) => swap(&["SliceA", "SliceB", "SliceC"], s),
        ("transaction_status", Value::String(s)) => swap(&["Failed", "Pending", "Success"], s),
        ("timestamp", Value::String(s)) => {
            let t = gridledger_core::time::parse_ts(s).unwrap() + chrono::Duration::seconds(1);
            Value::String(gridledger_core::time::format_ts(&t))
        }
        (_, Value::String(s)) => {
            let mut chars: Vec<char> = s.chars().collect();
            match chars.last_mut() {
                Some(c) if c.is_ascii_digit() => *c = if *c == '9' { '8' } else { (*c as u8 + 1) as char },
                Some(c) if c.is_ascii_hexdigit() => *c = if *c == 'f' { 'e' } else { 'f' },
                Some(c) => *c = if *c == 'x' { 'y' } else { 'x' },
                None => chars.push('x'),
            }
            Value::String(chars.into_iter().collect())
        }
        _ => panic!("unexpected field {key}"),
    }
}

#[test]
fn every_field_mutation_is_detected_on_a_fifty_block_chain() {
    let dir = chain_dir(50, 6, 77);
    assert!(is_valid(dir.path()));
    let text = std::fs::read_to_string(dir.path().join("chain.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 50);
    let render = |blocks: &[Value]| {
        let mut out = String::new();
        for b in blocks {
            out.push_str(&serde_json::to_string(b).unwrap());
            out.push('\n');
        }
        out.into_bytes()
    };
    let mut cases = 0;
    for h in 0..lines.len() {
        let block = lines[h].as_object().unwrap();
        for key in block.keys().filter(|k| *k != "transactions") {
            let mut mutated = lines.clone();
            mutated[h][key.as_str()] = alternative(key, &block[key]);
            assert!(!with_chain_bytes(dir.path(), &render(&mutated), is_valid), "block {h} field {key}");
            cases += 1;
        }
        let txs = block["transactions"].as_array().unwrap();
        for (t, tx) in txs.iter().enumerate() {
            for key in tx.as_object().unwrap().keys() {
                let mut mutated = lines.clone();
                mutated[h]["transactions"][t][key.as_str()] = alternative(key, &tx[key]);
                assert!(
                    !with_chain_bytes(dir.path(), &render(&mutated), is_valid),
                    "block {h} tx {t} field {key}"
                );
                cases += 1;
            }
        }
        // Dropping or duplicating a record is also caught.
        let mut dropped = lines.clone();
        dropped[h]["transactions"].as_array_mut().unwrap().pop();
        assert!(!with_chain_bytes(dir.path(), &render(&dropped), is_valid));
    }
    let mut reordered = lines.clone();
    reordered.swap(10, 11);
    assert!(!with_chain_bytes(dir.path(), &render(&reordered), is_valid));
    assert!(!with_chain_bytes(dir.path(), &render(&lines[..lines.len() - 1]), is_valid));
    assert!(cases > 50 * 6 * 18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_bit_flip_is_detected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        thread_local! {
            static DIR: tempfile::TempDir = chain_dir(50, 6, 5);
        }
        DIR.with(|dir| {
            let original = std::fs::read(dir.path().join("chain.jsonl")).unwrap();
            let mut bytes = original.clone();
            let i = pos.index(bytes.len());
            bytes[i] ^= 1 << bit;
            let valid = with_chain_bytes(dir.path(), &bytes, is_valid);
            prop_assert!(!valid, "flip of bit {} at byte {} went unnoticed", bit, i);
            Ok(())
        })?;
    }
}
