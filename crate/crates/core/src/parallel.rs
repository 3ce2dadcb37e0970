//! Order-preserving fan-out over input shards, capped by `MODLENS_THREADS`.

use crate::error::Result;

pub const THREADS_ENV: &str = "MODLENS_THREADS";

pub fn worker_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .map_or(available, |cap| cap.min(available))
}

/// Applies `f` to consecutive shards of `items` and concatenates the results in
/// input order. The output never depends on the number of workers.
pub fn map_shards<I, O, F>(items: &[I], shard: usize, f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&[I]) -> Result<Vec<O>> + Sync,
{
    let shard = shard.max(1);
    let shards: Vec<&[I]> = items.chunks(shard).collect();
    let workers = worker_threads().min(shards.len()).max(1);
    if workers == 1 {
        let mut out = Vec::with_capacity(items.len());
        for s in shards {
            out.extend(f(s)?);
        }
        return Ok(out);
    }
    let mut slots: Vec<Option<Result<Vec<O>>>> = (0..shards.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let shards = &shards;
            let f = &f;
            handles.push(scope.spawn(move || {
                (w..shards.len())
                    .step_by(workers)
                    .map(|i| (i, f(shards[i])))
                    .collect::<Vec<_>>()
            }));
        }
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let mut out = Vec::with_capacity(items.len());
    for r in slots {
        out.extend(r.expect("every shard visited")?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        let out = map_shards(&items, 7, |s| Ok(s.iter().map(|v| v * 2).collect())).unwrap();
        assert_eq!(out, items.iter().map(|v| v * 2).collect::<Vec<_>>());
    }
}
