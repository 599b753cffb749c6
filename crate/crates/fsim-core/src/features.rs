//! Audio feature pipeline: one-second patches to 101x96 log-mel arrays.
//!
//! Clips at 22,050 Hz are segmented into one-second patches with 50%
//! overlap. Each patch becomes a 101-frame, 96-band log-mel array: 30 ms
//! (661-sample) Hann frames every 10 ms (220 samples), centered with
//! reflection padding, a 1024-point transform, and peak-normalized
//! triangular filters on the HTK mel scale spanning 0 to 11,025 Hz. Patches
//! inherit their clip's labels; clip-level scores are the per-class mean
//! over patch scores.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::data::{ClipRecord, DataError, Vocabulary};
use crate::matrix::Matrix;

/// Working sample rate; inputs are assumed pre-resampled.
pub const SAMPLE_RATE: usize = 22_050;
/// One-second patch length in samples.
pub const PATCH_SAMPLES: usize = SAMPLE_RATE;
/// Patch hop: 50% overlap.
pub const PATCH_HOP: usize = SAMPLE_RATE / 2;
/// 30 ms analysis frame.
pub const FRAME_LEN: usize = 661;
/// 10 ms frame hop.
pub const FRAME_HOP: usize = 220;
/// Transform size (frames are zero-padded from 661).
pub const FFT_SIZE: usize = 1024;
/// Mel band count.
pub const NUM_MELS: usize = 96;
/// Frames per one-second patch: floor(22050 / 220) + 1.
pub const NUM_FRAMES: usize = PATCH_SAMPLES / FRAME_HOP + 1;
/// Additive floor inside the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("window has {got} samples, expected exactly {expected}")]
    WrongWindowLength { expected: usize, got: usize },
    #[error("clip has no samples")]
    EmptyClip,
    #[error("clip has no labels")]
    NoLabels,
    #[error("patch count {patches} does not match label inheritance input")]
    PatchMismatch { patches: usize },
    #[error("no patch scores to average")]
    EmptyScores,
    #[error(transparent)]
    Vocabulary(#[from] DataError),
}

/// A raw audio clip at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: usize,
}

/// Half-open sample range of one patch within its source clip. Spans
/// shorter than one second only occur for sub-second clips, which are
/// tile-repeated to a full second at extraction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpan {
    pub start: usize,
    pub end: usize,
}

impl PatchSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// One log-mel patch with its inherited clip-level labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MelPatch {
    /// `[NUM_FRAMES x NUM_MELS]` log-power values.
    pub values: Matrix,
    pub source_clip: String,
    /// Multi-hot class vector in vocabulary order.
    pub labels: Vec<f64>,
}

/// Patch boundaries for a clip of `num_samples` samples: one-second
/// windows every half second. A trailing partial window is right-aligned to
/// the clip end, so the last patch always ends at the final sample.
/// Sub-second clips yield a single span covering the whole clip.
pub fn segment_patches(num_samples: usize, sample_rate: usize) -> Vec<PatchSpan> {
    let patch = sample_rate;
    let hop = sample_rate / 2;
    if num_samples == 0 {
        return Vec::new();
    }
    if num_samples < patch {
        return vec![PatchSpan { start: 0, end: num_samples }];
    }
    let mut spans = Vec::new();
    let mut start = 0;
    while start + patch <= num_samples {
        spans.push(PatchSpan { start, end: start + patch });
        start += hop;
    }
    if spans.last().map_or(true, |s| s.end < num_samples) {
        spans.push(PatchSpan { start: num_samples - patch, end: num_samples });
    }
    spans
}

/// Materialize one patch window: a direct copy for full spans, tiled
/// repetition up to one second for sub-second clips.
pub fn extract_window(samples: &[f64], span: PatchSpan, sample_rate: usize) -> Vec<f64> {
    let patch = sample_rate;
    let slice = &samples[span.start..span.end];
    if slice.len() >= patch {
        return slice[..patch].to_vec();
    }
    let mut out = Vec::with_capacity(patch);
    while out.len() < patch {
        let take = (patch - out.len()).min(slice.len());
        out.extend_from_slice(&slice[..take]);
    }
    out
}

/// Precomputed window, filterbank, and transform plan for log-mel patches.
pub struct MelExtractor {
    fft: Arc<dyn Fft<f64>>,
    hann: Vec<f64>,
    /// `NUM_MELS` rows of `FFT_SIZE / 2 + 1` filter weights.
    filterbank: Vec<Vec<f64>>,
    /// Filter center frequencies in Hz.
    centers_hz: Vec<f64>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0f64.powf(mel / 2595.0) - 1.0)
}

impl MelExtractor {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);

        let hann: Vec<f64> = (0..FRAME_LEN)
            .map(|i| {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (FRAME_LEN - 1) as f64).cos()
            })
            .collect();

        // 98 equally spaced mel points from 0 Hz to Nyquist; filter b spans
        // points (b, b+1, b+2) with its peak of 1.0 at the middle point.
        let f_max = SAMPLE_RATE as f64 / 2.0;
        let mel_max = hz_to_mel(f_max);
        let points_hz: Vec<f64> = (0..NUM_MELS + 2)
            .map(|j| mel_to_hz(mel_max * j as f64 / (NUM_MELS + 1) as f64))
            .collect();
        let bins = FFT_SIZE / 2 + 1;
        let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
        let mut filterbank = Vec::with_capacity(NUM_MELS);
        for b in 0..NUM_MELS {
            let (lo, mid, hi) = (points_hz[b], points_hz[b + 1], points_hz[b + 2]);
            let mut row = vec![0.0; bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (mid - lo);
                let falling = (hi - f) / (hi - mid);
                *w = rising.min(falling).max(0.0);
            }
            filterbank.push(row);
        }
        let centers_hz = points_hz[1..=NUM_MELS].to_vec();

        Self { fft, hann, filterbank, centers_hz }
    }

    /// Filter center frequencies in Hz, one per mel band.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Log-mel array for one exactly-one-second window at 22,050 Hz.
    pub fn mel_patch(&self, window: &[f64]) -> Result<Matrix, FeatureError> {
        if window.len() != PATCH_SAMPLES {
            return Err(FeatureError::WrongWindowLength {
                expected: PATCH_SAMPLES,
                got: window.len(),
            });
        }
        let half = FRAME_LEN / 2;
        let n = window.len() as isize;
        // reflection padding around each frame center
        let sample_at = |v: isize| -> f64 {
            let mut v = v;
            loop {
                if v < 0 {
                    v = -v;
                } else if v >= n {
                    v = 2 * (n - 1) - v;
                } else {
                    return window[v as usize];
                }
            }
        };

        let mut out = Matrix::zeros(NUM_FRAMES, NUM_MELS);
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        let mut power = vec![0.0; FFT_SIZE / 2 + 1];
        for t in 0..NUM_FRAMES {
            let center = (t * FRAME_HOP) as isize;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = if i < FRAME_LEN {
                    Complex::new(sample_at(center - half as isize + i as isize) * self.hann[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
            let row = out.row_mut(t);
            for (b, filter) in self.filterbank.iter().enumerate() {
                let mel_power: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                row[b] = (mel_power + LOG_FLOOR).ln();
            }
        }
        Ok(out)
    }
}

impl Default for MelExtractor {
    fn default() -> Self {
        Self::new()
    }
}

fn shared_extractor() -> &'static MelExtractor {
    static EXTRACTOR: OnceLock<MelExtractor> = OnceLock::new();
    EXTRACTOR.get_or_init(MelExtractor::new)
}

/// One-shot [`MelExtractor::mel_patch`] using a shared extractor.
pub fn mel_patch(window: &[f64]) -> Result<Matrix, FeatureError> {
    shared_extractor().mel_patch(window)
}

/// Full pipeline for one clip: segment, tile short clips, extract log-mels.
pub fn clip_to_mel_patches(clip: &AudioClip) -> Result<Vec<Matrix>, FeatureError> {
    if clip.samples.is_empty() {
        return Err(FeatureError::EmptyClip);
    }
    let extractor = shared_extractor();
    segment_patches(clip.samples.len(), clip.sample_rate)
        .into_iter()
        .map(|span| extractor.mel_patch(&extract_window(&clip.samples, span, clip.sample_rate)))
        .collect()
}

/// Attach the clip's labels to every patch: each patch carries an identical
/// multi-hot copy of the clip-level label vector plus the source clip id.
pub fn inherit_labels(
    clip: &ClipRecord,
    vocab: &Vocabulary,
    patches: Vec<Matrix>,
) -> Result<Vec<MelPatch>, FeatureError> {
    if clip.labels.is_empty() {
        return Err(FeatureError::NoLabels);
    }
    let labels = vocab.binary_vector(&clip.labels)?;
    Ok(patches
        .into_iter()
        .map(|values| MelPatch {
            values,
            source_clip: clip.clip_id.clone(),
            labels: labels.clone(),
        })
        .collect())
}

/// Clip-level prediction: unweighted per-class mean over patch score rows.
pub fn clip_scores(patch_scores: &Matrix) -> Result<Vec<f64>, FeatureError> {
    if patch_scores.rows() == 0 {
        return Err(FeatureError::EmptyScores);
    }
    Ok(patch_scores.column_means())
}

/// Single-patch text export: one frame per line, space-separated values
/// formatted with full round-trip precision.
pub fn patch_to_text(values: &Matrix) -> String {
    let mut out = String::new();
    for row in values.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use std::f64::consts::PI;

    #[test]
    fn three_second_clip_yields_five_patches() {
        let spans = segment_patches(3 * SAMPLE_RATE, SAMPLE_RATE);
        let starts: Vec<usize> = spans.iter().map(|s| s.start).collect();
        assert_eq!(
            starts,
            vec![0, PATCH_HOP, 2 * PATCH_HOP, 3 * PATCH_HOP, 4 * PATCH_HOP]
        );
        assert!(spans.iter().all(|s| s.len() == PATCH_SAMPLES));
    }

    #[test]
    fn exactly_one_second_yields_one_patch() {
        let spans = segment_patches(SAMPLE_RATE, SAMPLE_RATE);
        assert_eq!(spans, vec![PatchSpan { start: 0, end: SAMPLE_RATE }]);
    }

    #[test]
    fn short_clip_is_tiled_to_one_second() {
        let n = (0.4 * SAMPLE_RATE as f64) as usize;
        let spans = segment_patches(n, SAMPLE_RATE);
        assert_eq!(spans, vec![PatchSpan { start: 0, end: n }]);
        let samples: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let window = extract_window(&samples, spans[0], SAMPLE_RATE);
        assert_eq!(window.len(), PATCH_SAMPLES);
        assert_eq!(window[0], 0.0);
        assert_eq!(window[n], 0.0); // tiling wraps around
        assert_eq!(window[n - 1], (n - 1) as f64);
    }

    #[test]
    fn trailing_partial_patch_is_right_aligned() {
        let n = (3.2 * SAMPLE_RATE as f64) as usize;
        let spans = segment_patches(n, SAMPLE_RATE);
        assert_eq!(spans.last().unwrap().end, n);
        assert_eq!(spans.last().unwrap().len(), PATCH_SAMPLES);
        // count formula for d >= 1s: ceil((d - 1) / 0.5) + 1
        assert_eq!(spans.len(), 6);
    }

    #[test]
    fn patch_count_formula_holds() {
        for n in [SAMPLE_RATE, SAMPLE_RATE + 1, 2 * SAMPLE_RATE, 5 * SAMPLE_RATE + 137] {
            let spans = segment_patches(n, SAMPLE_RATE);
            let expected = ((n - SAMPLE_RATE) as f64 / PATCH_HOP as f64).ceil() as usize + 1;
            assert_eq!(spans.len(), expected, "n = {n}");
        }
    }

    #[test]
    fn patches_cover_every_sample() {
        for n in [SAMPLE_RATE, 2 * SAMPLE_RATE + 931, 3 * SAMPLE_RATE] {
            let spans = segment_patches(n, SAMPLE_RATE);
            let mut covered = vec![false; n];
            for span in spans {
                for c in covered.iter_mut().take(span.end).skip(span.start) {
                    *c = true;
                }
            }
            assert!(covered.iter().all(|c| *c), "gap in coverage for n = {n}");
        }
    }

    #[test]
    fn mel_patch_shape_is_pinned() {
        let window = vec![0.1; PATCH_SAMPLES];
        let m = mel_patch(&window).unwrap();
        assert_eq!((m.rows(), m.cols()), (101, 96));
    }

    #[test]
    fn wrong_window_length_is_rejected() {
        let err = mel_patch(&vec![0.0; PATCH_SAMPLES - 1]).unwrap_err();
        assert!(matches!(
            err,
            FeatureError::WrongWindowLength { expected: PATCH_SAMPLES, got } if got == PATCH_SAMPLES - 1
        ));
    }

    #[test]
    fn silence_gives_constant_log_floor() {
        let m = mel_patch(&vec![0.0; PATCH_SAMPLES]).unwrap();
        let expected = LOG_FLOOR.ln();
        for v in m.values() {
            assert_eq!(*v, expected);
        }
    }

    #[test]
    fn amplitude_scaling_never_decreases_entries() {
        let tone: Vec<f64> =
            (0..PATCH_SAMPLES).map(|i| (2.0 * PI * 440.0 * i as f64 / SAMPLE_RATE as f64).sin()).collect();
        let scaled: Vec<f64> = tone.iter().map(|v| v * 2.5).collect();
        let a = mel_patch(&tone).unwrap();
        let b = mel_patch(&scaled).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!(y >= x);
        }
    }

    #[test]
    fn tone_peaks_in_band_nearest_its_frequency() {
        let freq = 1000.0;
        let tone: Vec<f64> =
            (0..PATCH_SAMPLES).map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()).collect();
        let extractor = MelExtractor::new();
        let expected_band = extractor
            .centers_hz()
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - freq).abs().total_cmp(&(*b - freq).abs()))
            .map(|(i, _)| i)
            .unwrap();
        let m = extractor.mel_patch(&tone).unwrap();
        // interior frames: full 661-sample support inside the window
        for t in 2..NUM_FRAMES - 2 {
            let row = m.row(t);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.total_cmp(b))
                .map(|(i, _)| i)
                .unwrap();
            assert_eq!(argmax, expected_band, "frame {t}");
        }
    }

    #[test]
    fn label_inheritance_copies_clip_labels() {
        let vocab = Vocabulary::from_classes(vec!["a".into(), "b".into(), "c".into()]);
        let clip = ClipRecord {
            clip_id: "clip7".into(),
            uploader: "u".into(),
            labels: BTreeSet::from(["a".to_string(), "c".to_string()]),
            split: crate::data::Split::Train,
            duration_s: None,
        };
        let patches = vec![Matrix::zeros(101, 96); 5];
        let labeled = inherit_labels(&clip, &vocab, patches).unwrap();
        assert_eq!(labeled.len(), 5);
        for p in &labeled {
            assert_eq!(p.labels, vec![1.0, 0.0, 1.0]);
            assert_eq!(p.source_clip, "clip7");
        }
    }

    #[test]
    fn label_inheritance_follows_vocabulary_order() {
        let clip = ClipRecord {
            clip_id: "c".into(),
            uploader: "u".into(),
            labels: BTreeSet::from(["a".to_string(), "c".to_string()]),
            split: crate::data::Split::Train,
            duration_s: None,
        };
        let forward = Vocabulary::from_classes(vec!["a".into(), "b".into(), "c".into()]);
        let reversed = Vocabulary::from_classes(vec!["c".into(), "b".into(), "a".into()]);
        let one = inherit_labels(&clip, &forward, vec![Matrix::zeros(101, 96)]).unwrap();
        let two = inherit_labels(&clip, &reversed, vec![Matrix::zeros(101, 96)]).unwrap();
        assert_eq!(one[0].labels, vec![1.0, 0.0, 1.0]);
        assert_eq!(two[0].labels, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let vocab = Vocabulary::from_classes(vec!["a".into()]);
        let clip = ClipRecord {
            clip_id: "c".into(),
            uploader: "u".into(),
            labels: BTreeSet::from(["zzz".to_string()]),
            split: crate::data::Split::Train,
            duration_s: None,
        };
        assert!(inherit_labels(&clip, &vocab, vec![]).is_err());
    }

    #[test]
    fn clip_scores_average_patch_rows() {
        let scores = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.4, 0.0]]).unwrap();
        let means = clip_scores(&scores).unwrap();
        assert!((means[0] - 0.3).abs() < 1e-15);
        assert!((means[1] - 0.4).abs() < 1e-15);

        let single = Matrix::from_rows(&[vec![0.7, 0.1]]).unwrap();
        assert_eq!(clip_scores(&single).unwrap(), vec![0.7, 0.1]);

        let identical = Matrix::from_rows(&vec![vec![0.5, 0.6]; 4]).unwrap();
        assert_eq!(clip_scores(&identical).unwrap(), vec![0.5, 0.6]);

        assert!(matches!(
            clip_scores(&Matrix::zeros(0, 3)).unwrap_err(),
            FeatureError::EmptyScores
        ));
    }

    #[test]
    fn clip_scores_bounded_by_patch_extremes() {
        let scores =
            Matrix::from_rows(&[vec![0.1, 0.9], vec![0.5, 0.3], vec![0.2, 0.6]]).unwrap();
        let means = clip_scores(&scores).unwrap();
        for (c, mean) in means.iter().enumerate() {
            let column: Vec<f64> = (0..scores.rows()).map(|i| scores.get(i, c)).collect();
            let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(*mean >= lo && *mean <= hi);
        }
    }

    #[test]
    fn patch_text_export_round_trips() {
        let m = Matrix::from_rows(&[vec![1.5, -2.25], vec![0.0, 3.125]]).unwrap();
        let text = patch_to_text(&m);
        let parsed: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(Matrix::from_rows(&parsed).unwrap(), m);
    }
}
