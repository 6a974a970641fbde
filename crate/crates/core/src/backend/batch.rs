use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{Backend, BackendError};
use crate::types::{GenerationTrace, RenderedPrompt};

/// Per-index results of a batch. `results[i]` is `None` exactly when an
/// error for index `i` is listed in `errors`.
#[derive(Debug)]
pub struct BatchOutput<T> {
    pub results: Vec<Option<T>>,
    pub errors: Vec<(usize, BackendError)>,
}

impl<T> BatchOutput<T> {
    pub fn is_complete(&self) -> bool {
        self.errors.is_empty()
    }

    /// All results in input order, or the partial output if any item failed.
    pub fn into_complete(self) -> Result<Vec<T>, Self> {
        if self.is_complete() {
            Ok(self.results.into_iter().map(|r| r.expect("complete batch")).collect())
        } else {
            Err(self)
        }
    }
}

/// Run `f(0..n)` on at most `max_in_flight` worker threads. Results come
/// back in index order no matter which finishes first.
pub fn run_bounded<T, F>(n: usize, max_in_flight: usize, f: F) -> BatchOutput<T>
where
    T: Send,
    F: Fn(usize) -> Result<T, BackendError> + Sync,
{
    let slots: Vec<Mutex<Option<Result<T, BackendError>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.max(1).min(n);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    let mut results = Vec::with_capacity(n);
    let mut errors = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().expect("slot lock").expect("every index visited") {
            Ok(v) => results.push(Some(v)),
            Err(e) => {
                results.push(None);
                errors.push((i, e));
            }
        }
    }
    BatchOutput { results, errors }
}

pub fn complete_batch(backend: &dyn Backend, prompts: &[RenderedPrompt]) -> BatchOutput<GenerationTrace> {
    run_bounded(prompts.len(), backend.config().max_in_flight, |i| {
        backend.complete(&prompts[i])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn order_is_preserved_under_reversed_latency() {
        let out = run_bounded(8, 4, |i| {
            std::thread::sleep(Duration::from_millis((8 - i as u64) * 3));
            Ok(i * 10)
        });
        let v = out.into_complete().unwrap();
        assert_eq!(v, (0..8).map(|i| i * 10).collect::<Vec<_>>());
    }

    #[test]
    fn failures_are_indexed() {
        let out = run_bounded(3, 2, |i| {
            if i == 1 {
                Err(BackendError::Malformed("bad".into()))
            } else {
                Ok(i)
            }
        });
        assert_eq!(out.results.iter().filter(|r| r.is_some()).count(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].0, 1);
        assert!(out.into_complete().is_err());
    }

    #[test]
    fn in_flight_bound_is_respected() {
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        run_bounded(20, 3, |_| {
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(2));
            live.fetch_sub(1, Ordering::SeqCst);
            Ok(())
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn empty_batch() {
        let out: BatchOutput<()> = run_bounded(0, 4, |_| Ok(()));
        assert!(out.results.is_empty() && out.errors.is_empty());
    }
}
