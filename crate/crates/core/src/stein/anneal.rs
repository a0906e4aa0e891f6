/// Linear warm-up of the score term: `max(iteration, 1) / warmup`, capped at 1.
/// The floor keeps the score from vanishing at iteration 0.
pub fn anneal_scale(iteration: usize, warmup_len: usize) -> f64 {
    if warmup_len == 0 {
        return 1.0;
    }
    (iteration.max(1) as f64 / warmup_len as f64).min(1.0)
}
