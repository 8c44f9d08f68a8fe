use std::collections::BTreeMap;

use super::{RrSeries, SleepStage};
use crate::ingest::StageAnnotation;

/// Per-stage RR series. Every stage key is present, possibly empty.
pub type StageMap = BTreeMap<SleepStage, RrSeries>;

/// Splits `rr` by the stage whose annotation interval contains each onset.
///
/// Intervals outside every annotated span are discarded. When the annotation is
/// empty and the series carries its own per-interval labels, those labels are used.
pub fn segment_by_stage(rr: &RrSeries, ann: &StageAnnotation) -> StageMap {
    let labels: Vec<Option<SleepStage>> = if ann.is_empty() {
        match rr.stages() {
            Some(own) => own.to_vec(),
            None => vec![None; rr.len()],
        }
    } else {
        rr.onsets().iter().map(|&t| ann.stage_at(t)).collect()
    };

    SleepStage::ALL
        .iter()
        .map(|&stage| {
            let part = rr.retain_indices(|i| labels[i] == Some(stage));
            (stage, part)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StageSpan;
    use proptest::prelude::*;

    fn span(start: f64, end: f64, stage: SleepStage) -> StageSpan {
        StageSpan { start, end, stage }
    }

    #[test]
    fn onsets_assigned_to_containing_span() {
        let rr = RrSeries::new(vec![900.0, 950.0], vec![0.5, 1.5], None).unwrap();
        let ann = StageAnnotation::new(vec![
            span(0.0, 1.0, SleepStage::Ds),
            span(1.0, 2.0, SleepStage::Rem),
        ])
        .unwrap();
        let map = segment_by_stage(&rr, &ann);
        assert_eq!(map[&SleepStage::Ds].intervals(), &[900.0]);
        assert_eq!(map[&SleepStage::Rem].intervals(), &[950.0]);
        assert!(map[&SleepStage::Rs].is_empty());
    }

    #[test]
    fn annotation_covering_nothing() {
        let rr = RrSeries::from_intervals(vec![800.0; 5], None).unwrap();
        let ann = StageAnnotation::new(vec![span(100.0, 200.0, SleepStage::Rem)]).unwrap();
        let map = segment_by_stage(&rr, &ann);
        assert!(map.values().all(|s| s.is_empty()));
        assert_eq!(map.len(), 3);
    }

    #[test]
    fn falls_back_to_series_labels() {
        let labels = vec![
            Some(SleepStage::Rs),
            None,
            Some(SleepStage::Ds),
            Some(SleepStage::Rs),
        ];
        let rr = RrSeries::from_intervals(vec![800.0, 810.0, 820.0, 830.0], Some(labels)).unwrap();
        let map = segment_by_stage(&rr, &StageAnnotation::default());
        assert_eq!(map[&SleepStage::Rs].intervals(), &[800.0, 830.0]);
        assert_eq!(map[&SleepStage::Ds].intervals(), &[820.0]);
        assert!(map[&SleepStage::Rem].is_empty());
    }

    proptest! {
        #[test]
        fn partitions_covered_intervals(
            intervals in proptest::collection::vec(300.0f64..2000.0, 1..300),
            cuts in proptest::collection::vec((1.0f64..30.0, 0u8..4), 1..12),
        ) {
            let rr = RrSeries::from_intervals(intervals, None).unwrap();
            let mut spans = Vec::new();
            let mut t = 0.0;
            for (len, code) in cuts {
                // code 3 leaves a gap
                if code < 3 {
                    spans.push(span(t, t + len, SleepStage::ALL[code as usize]));
                }
                t += len;
            }
            let ann = StageAnnotation::new(spans).unwrap();
            let map = segment_by_stage(&rr, &ann);
            let covered = rr.onsets().iter().filter(|&&t| ann.stage_at(t).is_some()).count();
            let total: usize = map.values().map(|s| s.len()).sum();
            prop_assert_eq!(total, covered);
            for s in map.values() {
                prop_assert!(s.onsets().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
