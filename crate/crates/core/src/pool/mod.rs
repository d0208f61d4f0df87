//! Model record pools: storage, ingestion, the synthetic error oracle and
//! the external evaluator protocol.

pub mod evaluator;
mod record;
mod store;
mod synthetic;

pub use record::{check_sources, filter_pool, samples, ModelRecord, RecordKey, Source};
pub use store::{read_pool, to_jsonl, write_pool, IngestReport, Pool, RejectReason, Rejection, SCHEMA_VERSION};
pub use synthetic::{evaluate_synthetic, synthetic_error, ARCH_NOISE, PARAMS_SLOPE, SEED_NOISE};

use crate::error::Result;
use crate::exec::{derive_seed, Execution};
use crate::space::DesignSpace;

/// `n` unevaluated records. Record `i` is drawn from generator `(seed, i)`
/// and gets training seed `derive_seed(seed, i)`.
pub fn sample_records(space: &DesignSpace, n: usize, seed: u64, exec: Execution) -> Result<Vec<ModelRecord>> {
    let archs = space.sample_batch(n, seed, exec)?;
    let regime = space.regime();
    let name = space.name();
    archs
        .into_iter()
        .enumerate()
        .map(|(i, arch)| {
            let run_id = format!("{name}-{seed}-{i:06}");
            ModelRecord::new(name, regime, arch, derive_seed(seed, i as u64), run_id)
        })
        .collect()
}

/// `n` records evaluated by the synthetic oracle.
pub fn synthetic_pool(space: &DesignSpace, n: usize, seed: u64, exec: Execution) -> Result<Vec<ModelRecord>> {
    let mut records = sample_records(space, n, seed, exec)?;
    let errors = exec.map_indexed(records.len(), |i| {
        let r = &records[i];
        synthetic_error(&r.arch, r.flops, r.params, r.seed)
    });
    for (r, e) in records.iter_mut().zip(errors) {
        r.error = Some(e);
        r.source = Source::Synthetic;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::evaluator::*;
    use super::*;
    use crate::complexity::{ComplexityCeiling, Metric};
    use crate::error::Error;
    use std::io::Cursor;
    use std::time::Duration;

    fn space() -> DesignSpace {
        DesignSpace::preset("resnet").unwrap()
    }

    #[test]
    fn write_read_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synthetic_pool(&space(), 3, 1, Execution::default()).unwrap();
        let src = dir.path().join("src.jsonl");
        write_pool(&src, &recs).unwrap();

        let dst = dir.path().join("dst.jsonl");
        let mut pool = Pool::open(&dst).unwrap();
        let report = pool
            .ingest(std::io::BufReader::new(std::fs::File::open(&src).unwrap()))
            .unwrap();
        assert_eq!((report.accepted, report.rejected.len()), (3, 0));
        assert_eq!(read_pool(&dst).unwrap(), recs);
        assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&dst).unwrap());
    }

    #[test]
    fn ingest_rejections() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = synthetic_pool(&space(), 4, 2, Execution::default()).unwrap();
        recs[1].flops += 1;
        recs[2].error = Some(120.0);
        let dup = recs[0].clone();
        let mut text = to_jsonl(&recs);
        text.push_str(&serde_json::to_string(&dup).unwrap());
        text.push_str("\n{not json\n");

        let mut pool = Pool::open(&dir.path().join("p.jsonl")).unwrap();
        let report = pool.ingest(Cursor::new(text)).unwrap();
        assert_eq!(report.accepted, 2);
        let reasons: Vec<_> = report.rejected.iter().map(|r| (r.line, r.reason)).collect();
        assert_eq!(
            reasons,
            [
                (3, RejectReason::BadComplexity),
                (4, RejectReason::OutOfRangeError),
                (6, RejectReason::Duplicate),
                (7, RejectReason::MalformedLine),
            ]
        );
        // durable: a fresh open sees the accepted records
        assert_eq!(Pool::open(pool.path()).unwrap().records().len(), 2);
    }

    #[test]
    fn filter_matches_brute_force() {
        let recs = sample_records(&space(), 200, 3, Execution::default()).unwrap();
        let ceiling = ComplexityCeiling::preset("r56-flops").unwrap();
        let kept = filter_pool(&recs, &ceiling);
        assert_eq!(kept.len(), recs.iter().filter(|r| r.flops < ceiling.limit).count());
        assert!(!kept.is_empty() && kept.len() < recs.len());

        let mut at = recs[0].clone();
        at.flops = 100;
        let mut below = at.clone();
        below.flops = 99;
        let c = ComplexityCeiling::new(Metric::Flops, 100).unwrap();
        assert_eq!(filter_pool(&[at, below.clone()], &c), vec![below]);
    }

    #[test]
    fn mixed_sources_refused() {
        let mut recs = synthetic_pool(&space(), 4, 4, Execution::default()).unwrap();
        recs[0].source = Source::External;
        assert!(matches!(samples(&recs, Metric::Flops, false), Err(Error::MixedSources)));
        assert_eq!(samples(&recs, Metric::Flops, true).unwrap().len(), 4);
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_records(&space(), 20, 9, Execution::Sequential).unwrap();
        let b = sample_records(&space(), 20, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.error.is_none()));
        let a = synthetic_pool(&space(), 50, 9, Execution::Sequential).unwrap();
        assert_eq!(a, synthetic_pool(&space(), 50, 9, Execution::Parallel).unwrap());
    }

    fn requests(n: usize) -> Vec<EvalRequest> {
        sample_records(&space(), n, 5, Execution::default())
            .unwrap()
            .iter()
            .map(EvalRequest::from_record)
            .collect()
    }

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    // Answers each request with error 12.5, echoing its run_id.
    const ECHO: &str = r#"while IFS= read -r line; do id=$(printf '%s' "$line" | sed 's/.*"run_id":"\([^"]*\)".*/\1/'); printf '{"run_id":"%s","error":12.5}\n' "$id"; done"#;

    #[test]
    fn subprocess_roundtrip() {
        let reqs = requests(5);
        let cfg = EvaluatorConfig {
            command: sh(ECHO),
            timeout: Duration::from_secs(10),
            retries: 0,
        };
        let out = run_subprocess(&cfg, &reqs).unwrap();
        assert_eq!(out.results.len(), 5);
        assert!(out.results.iter().all(|r| r.error == 12.5));

        let mut recs = sample_records(&space(), 5, 5, Execution::default()).unwrap();
        assert_eq!(apply_results(&mut recs, &out.results), 5);
        assert!(recs
            .iter()
            .all(|r| r.source == Source::External && r.error == Some(12.5)));
    }

    #[test]
    fn subprocess_timeout_and_retry() {
        let reqs = requests(2);
        let silent = EvaluatorConfig {
            command: sh("sleep 5"),
            timeout: Duration::from_millis(200),
            retries: 1,
        };
        assert!(matches!(run_subprocess(&silent, &reqs), Err(Error::Evaluator(_))));

        // fails on the first attempt, answers on the second
        let dir = tempfile::tempdir().unwrap();
        let flag = dir.path().join("flag");
        let script = format!(
            "if [ -e {f} ]; then {ECHO}; else touch {f}; exit 1; fi",
            f = flag.display()
        );
        let flaky = EvaluatorConfig {
            command: sh(&script),
            timeout: Duration::from_secs(10),
            retries: 1,
        };
        assert_eq!(run_subprocess(&flaky, &reqs).unwrap().results.len(), 2);
    }

    #[test]
    fn file_protocol_dedups_and_flags_unknown() {
        let reqs = requests(3);
        let dir = tempfile::tempdir().unwrap();
        let req_path = dir.path().join("req.jsonl");
        write_requests(&req_path, &reqs).unwrap();
        assert_eq!(std::fs::read_to_string(&req_path).unwrap().lines().count(), 3);

        let res_path = dir.path().join("res.jsonl");
        let body = format!(
            "{{\"run_id\":\"{a}\",\"error\":5}}\n{{\"run_id\":\"{a}\",\"error\":6}}\n{{\"run_id\":\"zzz\",\"error\":1}}\n{{\"run_id\":\"{b}\",\"error\":101}}\n",
            a = reqs[0].run_id,
            b = reqs[1].run_id
        );
        std::fs::write(&res_path, body).unwrap();
        let out = read_results(&res_path, &reqs).unwrap();
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.results[0].error, 5.0);
        assert_eq!(out.missing, vec![reqs[1].run_id.clone(), reqs[2].run_id.clone()]);
        assert_eq!(out.warnings.len(), 2);
    }
}
