//! Order-preserving parallel map over scoped threads.

/// Apply `f` to every item using up to `jobs` threads. Results come back in
/// input order, so output never depends on scheduling.
pub fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..103).collect();
        let serial = super::par_map(&xs, 1, |x| x * x);
        let parallel = super::par_map(&xs, 4, |x| x * x);
        assert_eq!(serial, parallel);
        assert!(super::par_map(&Vec::<u64>::new(), 3, |x| *x).is_empty());
    }
}
