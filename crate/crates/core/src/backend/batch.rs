use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

/// Runs `work` over `items` with at most `parallelism` calls in flight.
///
/// `on_done` runs on the calling thread, once per finished item, in
/// completion order; returning `false` stops the run: no new items start and
/// results still in flight are discarded. The returned vector is in input
/// order, with `None` for items that never completed.
pub fn run_bounded<T, R, W, D>(items: Vec<T>, parallelism: usize, work: W, mut on_done: D) -> Vec<Option<R>>
where
    T: Send,
    R: Send,
    W: Fn(usize, T) -> R + Sync,
    D: FnMut(usize, &R) -> bool,
{
    let n = items.len();
    let mut results: Vec<Option<R>> = (0..n).map(|_| None).collect();
    if n == 0 {
        return results;
    }
    let slots: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = parallelism.max(1).min(n);
    let (tx, rx) = mpsc::channel::<(usize, R)>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (slots, next, stop, work) = (&slots, &next, &stop, &work);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= n {
                    break;
                }
                let item = slots[idx].lock().unwrap().take().expect("item taken once");
                let out = work(idx, item);
                if tx.send((idx, out)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (idx, out) in rx {
            if stop.load(Ordering::SeqCst) {
                continue;
            }
            if !on_done(idx, &out) {
                stop.store(true, Ordering::SeqCst);
            }
            results[idx] = Some(out);
        }
    });
    results
}
