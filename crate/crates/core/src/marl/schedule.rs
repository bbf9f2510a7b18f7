//! Learning-rate and batch-size schedules.

/// Geometric interpolation from `start` to `end` over `total` epochs.
pub fn lr_at(epoch: usize, total: usize, start: f64, end: f64) -> f64 {
    if total <= 1 {
        return start;
    }
    let f = (epoch.min(total - 1)) as f64 / (total - 1) as f64;
    start * (end / start).powf(f)
}

/// Doubling from `start` toward `end` on evenly spaced milestones.
pub fn batch_at(epoch: usize, total: usize, start: usize, end: usize) -> usize {
    if start == 0 || end <= start || total == 0 {
        return start.max(1);
    }
    let levels = (end as f64 / start as f64).log2().floor() as usize + 1;
    let level = ((epoch.min(total - 1) * levels) / total).min(levels - 1);
    (start << level).min(end)
}
