use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::phylog::ChannelKind;
use crate::slottok::{decode_slot, Token};

/// Per-channel reference frequency and prediction precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub channel: ChannelKind,
    /// Share of this channel among all reference channel tokens.
    pub frequency: f64,
    /// Fraction of predicted occurrences matched by a reference occurrence;
    /// `None` when the channel was never predicted.
    pub channel_tp: Option<f64>,
    /// Fraction of predicted occurrences matched with the same RNTI.
    pub rnti_tp: Option<f64>,
    pub predicted: usize,
    pub reference: usize,
    pub matched: usize,
    pub rnti_matched: usize,
}

/// Channel occurrences with their RNTI, read straight off the tokens.
fn occurrences(seq: &[Token]) -> Vec<(ChannelKind, Option<u8>)> {
    seq.iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let kind = t.channel_kind()?;
            let rnti = match (
                seq.get(i + 1).and_then(|t| t.hex_value()),
                seq.get(i + 2).and_then(|t| t.hex_value()),
            ) {
                (Some(hi), Some(lo)) => Some(hi << 4 | lo),
                _ => None,
            };
            Some((kind, rnti))
        })
        .collect()
}

#[derive(Default)]
struct Counts {
    predicted: usize,
    reference: usize,
    matched: usize,
    rnti_matched: usize,
}

/// RNTIs of one channel's occurrences within a slot.
type Rntis = Vec<Option<u8>>;

/// Multiset matching per slot: each reference occurrence can be claimed by at
/// most one predicted occurrence. A prediction that is not a single
/// well-formed slot keeps its occurrences in the denominator but matches
/// nothing.
pub fn channel_precision(pairs: &[(Vec<Token>, Vec<Token>)]) -> Vec<PrecisionRow> {
    let mut counts: BTreeMap<ChannelKind, Counts> = BTreeMap::new();
    for (pred, reference) in pairs {
        let valid = decode_slot(pred, 0).is_ok();
        let pred_occ = occurrences(pred);
        let ref_occ = occurrences(reference);

        let mut by_kind: BTreeMap<ChannelKind, (Rntis, Rntis)> = BTreeMap::new();
        for (k, r) in &pred_occ {
            by_kind.entry(*k).or_default().0.push(*r);
        }
        for (k, r) in &ref_occ {
            by_kind.entry(*k).or_default().1.push(*r);
        }
        for (kind, (p, r)) in by_kind {
            let c = counts.entry(kind).or_default();
            c.predicted += p.len();
            c.reference += r.len();
            if !valid {
                continue;
            }
            c.matched += p.len().min(r.len());
            let mut remaining = r.clone();
            for rnti in &p {
                if let Some(i) = remaining.iter().position(|x| x == rnti) {
                    remaining.swap_remove(i);
                    c.rnti_matched += 1;
                }
            }
        }
    }

    let total_ref: usize = counts.values().map(|c| c.reference).sum();
    ChannelKind::ALL
        .iter()
        .filter_map(|kind| {
            let c = counts.get(kind)?;
            let ratio = |n: usize| (c.predicted > 0).then(|| n as f64 / c.predicted as f64);
            Some(PrecisionRow {
                channel: *kind,
                frequency: if total_ref == 0 {
                    0.0
                } else {
                    c.reference as f64 / total_ref as f64
                },
                channel_tp: ratio(c.matched),
                rnti_tp: ratio(c.rnti_matched),
                predicted: c.predicted,
                reference: c.reference,
                matched: c.matched,
                rnti_matched: c.rnti_matched,
            })
        })
        .collect()
}

/// `token,p_ci,tp_ci,tp_r_ci`; never-predicted channels leave the TP cells empty.
pub fn precision_csv(rows: &[PrecisionRow]) -> String {
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut out = String::from("token,p_ci,tp_ci,tp_r_ci\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{},{}\n",
            Token::channel(r.channel).name(),
            r.frequency,
            cell(r.channel_tp),
            cell(r.rnti_tp)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slottok::parse_tokens;

    fn t(s: &str) -> Vec<Token> {
        parse_tokens(s).unwrap()
    }

    fn row(rows: &[PrecisionRow], k: ChannelKind) -> &PrecisionRow {
        rows.iter().find(|r| r.channel == k).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let s = t("8 : PDCCH-DCI1_0 0 1 , PDSCH 0 1 [ 0 , 6 0 ] ( 1 , E ) ;");
        let rows = channel_precision(&[(s.clone(), s)]);
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.channel_tp, Some(1.0));
            assert_eq!(r.rnti_tp, Some(1.0));
            assert_eq!(r.frequency, 0.5);
        }
    }

    #[test]
    fn wrong_channel_and_wrong_rnti() {
        let rows = channel_precision(&[(t("0 : PDSCH 0 1 ;"), t("0 : PUCCH 0 1 ;"))]);
        assert_eq!(row(&rows, ChannelKind::Pdsch).channel_tp, Some(0.0));
        assert_eq!(row(&rows, ChannelKind::Pucch).channel_tp, None);
        assert_eq!(row(&rows, ChannelKind::Pucch).frequency, 1.0);

        let rows = channel_precision(&[(t("0 : PDSCH 0 2 ;"), t("0 : PDSCH 0 1 ;"))]);
        let r = row(&rows, ChannelKind::Pdsch);
        assert_eq!((r.channel_tp, r.rnti_tp), (Some(1.0), Some(0.0)));
    }

    /// Five pairs with hand-counted totals.
    #[test]
    fn hand_computed_fixture() {
        let pairs = vec![
            // PDSCH x2 predicted, one reference: 1 match, RNTI 01 matches.
            (t("0 : PDSCH 0 1 , PDSCH 0 2 ;"), t("0 : PDSCH 0 1 ;")),
            // PUCCH predicted with wrong RNTI; PUSCH missed.
            (t("1 : PUCCH 0 3 ;"), t("1 : PUCCH 0 1 , PUSCH 0 1 ;")),
            // Malformed prediction: its PDSCH counts but matches nothing.
            (t("2 : PDSCH 0 1 [ 0 ;"), t("2 : PDSCH 0 1 ;")),
            // PRACH without RNTI matches PRACH without RNTI.
            (
                t("3 : PRACH [ 0 , C ] ( 0 , E ) ;"),
                t("3 : PRACH [ 0 , C ] ( 0 , E ) ;"),
            ),
            // Empty prediction against a DCI.
            (t("4 : EMPTY ;"), t("4 : PDCCH-DCI0_0 0 1 ;")),
        ];
        let rows = channel_precision(&pairs);
        // reference channel tokens: PDSCH 2, PUCCH 1, PUSCH 1, PRACH 1, DCI0_0 1 -> 6
        let pdsch = row(&rows, ChannelKind::Pdsch);
        assert_eq!(
            (pdsch.predicted, pdsch.matched, pdsch.rnti_matched),
            (3, 1, 1)
        );
        assert_eq!(pdsch.frequency, 2.0 / 6.0);
        assert_eq!(pdsch.channel_tp, Some(1.0 / 3.0));
        assert_eq!(pdsch.rnti_tp, Some(1.0 / 3.0));
        let pucch = row(&rows, ChannelKind::Pucch);
        assert_eq!((pucch.channel_tp, pucch.rnti_tp), (Some(1.0), Some(0.0)));
        assert_eq!(row(&rows, ChannelKind::Pusch).channel_tp, None);
        let prach = row(&rows, ChannelKind::Prach);
        assert_eq!((prach.channel_tp, prach.rnti_tp), (Some(1.0), Some(1.0)));
        let dci = row(&rows, ChannelKind::PdcchDci00);
        assert_eq!((dci.frequency, dci.channel_tp), (1.0 / 6.0, None));
        let total: f64 = rows.iter().map(|r| r.frequency).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let rows = channel_precision(&[(t("0 : PDSCH 0 2 ;"), t("0 : PUCCH 0 1 ;"))]);
        assert_eq!(
            precision_csv(&rows),
            "token,p_ci,tp_ci,tp_r_ci\nPDSCH,0.000000,0.000000,0.000000\nPUCCH,1.000000,,\n"
        );
    }
}
