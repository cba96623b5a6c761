/// Linear warm-up from 0 to `base_lr` over `warmup` steps, then cosine
/// annealing down to 0 at `total`.
pub fn lr_at(step: u64, base_lr: f64, warmup: u64, total: u64) -> f64 {
    let step = step.min(total);
    if step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup);
    if span == 0 {
        return base_lr;
    }
    let progress = (step - warmup) as f64 / span as f64;
    0.5 * base_lr * (1.0 + (std::f64::consts::PI * progress).cos())
}
