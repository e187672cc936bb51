/// Length of the audio-event and location vectors.
pub const TRACK_LEN: usize = 7;

/// Expands sparse `(frame, vector)` rows to one vector per frame. Frames
/// without a row repeat the last known vector; frames before the first row
/// are zero. Rows past `frame_count` are ignored.
pub fn align_track(
    rows: &[(usize, [f64; TRACK_LEN])],
    frame_count: usize,
) -> Vec<[f64; TRACK_LEN]> {
    let mut sorted: Vec<_> = rows.iter().filter(|(f, _)| *f < frame_count).collect();
    sorted.sort_by_key(|(f, _)| *f);
    let mut out = Vec::with_capacity(frame_count);
    let mut current = [0.0; TRACK_LEN];
    let mut next = sorted.into_iter().peekable();
    for t in 0..frame_count {
        while let Some((_, v)) = next.next_if(|(f, _)| *f <= t) {
            current = *v;
        }
        out.push(current);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_fill_with_zero_lead() {
        let a = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let out = align_track(&[(5, b), (2, a), (9, a)], 7);
        assert_eq!(out.len(), 7);
        assert_eq!(out[0], [0.0; 7]);
        assert_eq!(out[1], [0.0; 7]);
        assert_eq!(out[2], a);
        assert_eq!(out[4], a);
        assert_eq!(out[5], b);
        assert_eq!(out[6], b);
    }
}
