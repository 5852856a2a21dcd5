/// Plain cosine: dot / (|a| |b|), zero when either norm vanishes.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let dot: f64 = (0..a.len()).map(|i| a[i] * b[i]).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Keep-mask over `[keyframe, others...]`: the keyframe stays, any other
/// frame stays iff its similarity to the keyframe is at most the mean.
pub fn reduce_frames(key: &[f64], others: &[Vec<f64>]) -> Vec<bool> {
    let mut keep = vec![true];
    if others.is_empty() {
        return keep;
    }
    let sims: Vec<f64> = others.iter().map(|o| cosine(key, o)).collect();
    let threshold = mean(&sims);
    keep.extend(sims.iter().map(|&s| s <= threshold));
    keep
}

/// d_i against the mean of chapters max(0, i-l)..i (0-based), recomputed
/// from scratch for every chapter.
pub fn chapter_similarities(embs: &[Vec<f64>], l: usize) -> Vec<Option<f64>> {
    (0..embs.len())
        .map(|i| {
            if i == 0 {
                return None;
            }
            let start = i.saturating_sub(l);
            let history = &embs[start..i];
            let dim = embs[i].len();
            let centroid: Vec<f64> = (0..dim)
                .map(|j| history.iter().map(|h| h[j]).sum::<f64>() / history.len() as f64)
                .collect();
            Some(cosine(&embs[i], &centroid))
        })
        .collect()
}

pub fn retained_chapters(embs: &[Vec<f64>], l: usize) -> Vec<bool> {
    let sims = chapter_similarities(embs, l);
    let defined: Vec<f64> = sims.iter().filter_map(|s| *s).collect();
    if defined.is_empty() {
        return vec![true; embs.len()];
    }
    let threshold = mean(&defined);
    sims.iter()
        .map(|s| match s {
            None => true,
            Some(d) => *d <= threshold,
        })
        .collect()
}

/// Region names straight from the nine-row condition table.
pub fn position_table(x: f64, y: f64) -> &'static str {
    let rows: [(&str, bool); 9] = [
        ("top-left", x < 0.33 && y < 0.33),
        ("top", (0.33..0.66).contains(&x) && y < 0.33),
        ("top-right", x >= 0.66 && y < 0.33),
        ("left", x < 0.33 && (0.33..0.66).contains(&y)),
        ("center", (0.33..0.66).contains(&x) && (0.33..0.66).contains(&y)),
        ("right", x >= 0.66 && (0.33..0.66).contains(&y)),
        ("bottom-left", x < 0.33 && y >= 0.66),
        ("bottom", (0.33..0.66).contains(&x) && y >= 0.66),
        ("bottom-right", x >= 0.66 && y >= 0.66),
    ];
    let hits: Vec<&str> = rows.iter().filter(|r| r.1).map(|r| r.0).collect();
    assert_eq!(hits.len(), 1, "table rows overlap or miss at ({x}, {y})");
    hits[0]
}

pub fn size_table(area: f64) -> &'static str {
    if area < 0.33 {
        "small"
    } else if 0.33 <= area && area < 0.66 {
        "medium"
    } else {
        "large"
    }
}

/// Max cosine between a query and every candidate text embedding.
pub fn best_score(query: &[f64], texts: &[Vec<f64>]) -> f64 {
    texts
        .iter()
        .map(|t| cosine(query, t))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Counts queries whose truth appears among the first `k` ids.
pub fn recall(lists: &[Vec<String>], truth: &[String], k: usize) -> f64 {
    let mut hits = 0;
    for (list, t) in lists.iter().zip(truth) {
        for id in list.iter().take(k) {
            if id == t {
                hits += 1;
                break;
            }
        }
    }
    hits as f64 / lists.len() as f64
}
