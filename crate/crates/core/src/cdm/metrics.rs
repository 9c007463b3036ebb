use super::CdmError;

/// Mann–Whitney AUC over `(prediction, label)` pairs. Ties count one half.
///
/// Returns `None` when the labels contain a single class, where the
/// statistic is undefined.
pub fn auc(pairs: &[(f64, u8)]) -> Option<f64> {
    let n_pos = pairs.iter().filter(|p| p.1 == 1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));

    // midranks over tie groups, 1-based
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pairs[order[j]].0 == pairs[order[i]].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| pairs[k].1 == 1).count();
        pos_rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Root mean squared error between predictions and 0/1 labels.
pub fn rmse(pairs: &[(f64, u8)]) -> Result<f64, CdmError> {
    if pairs.is_empty() {
        return Err(CdmError::EmptyInput("rmse"));
    }
    let sse: f64 = pairs.iter().map(|&(p, y)| (p - y as f64).powi(2)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}
