//! Labelled trees via Prüfer sequences.

/// Decodes a Prüfer sequence over `0..n` (length `n - 2`) into the `n - 1`
/// edges of the corresponding labelled tree.
pub fn decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    assert!(n >= 2 && seq.len() == n - 2, "Prüfer sequence for {n} vertices must have length {}", n.saturating_sub(2));
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    // Linear-time decode: `leaf` scans upwards, `ptr` remembers the scan
    // position so newly created small leaves are taken immediately.
    let mut ptr = degree.iter().position(|&d| d == 1).expect("a tree has a leaf");
    let mut leaf = ptr;
    for &v in seq {
        edges.push((leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 && v < ptr {
            leaf = v;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    edges.push((leaf, n - 1));
    edges
}

/// Calls `f` with the edge list of every labelled tree on `0..n`
/// (`n^(n-2)` of them, `n >= 1`; the single-vertex tree has no edges).
pub fn for_each_tree(n: usize, mut f: impl FnMut(&[(usize, usize)])) {
    match n {
        0 => {}
        1 => f(&[]),
        _ => {
            let mut seq = vec![0usize; n - 2];
            loop {
                f(&decode(&seq, n));
                // odometer increment
                let mut pos = 0;
                loop {
                    if pos == seq.len() {
                        return;
                    }
                    seq[pos] += 1;
                    if seq[pos] < n {
                        break;
                    }
                    seq[pos] = 0;
                    pos += 1;
                }
            }
        }
    }
}
