/// Linear warmup from 0 to `base_lr` over the first
/// `round(warmup_ratio * total_steps)` steps, then linear decay to 0 at
/// `total_steps`. Steps past the end clamp to 0.
pub fn lr_at(step: usize, total_steps: usize, warmup_ratio: f64, base_lr: f64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return 0.0;
    }
    let warmup = (warmup_ratio * total_steps as f64).round() as usize;
    if step < warmup {
        base_lr * step as f64 / warmup as f64
    } else {
        base_lr * (total_steps - step) as f64 / (total_steps - warmup) as f64
    }
}
