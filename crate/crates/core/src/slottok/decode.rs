use crate::phylog::{ChannelMessage, Interval, SlotId, SlotRecord};
use crate::synchk::{Phase, SlotGrammarState, ViolationKind};

use super::{slot_offsets, Token, TokenizeError};

/// Decodes exactly one slot. The SFN is not part of the encoding and is
/// supplied by the caller.
pub fn decode_slot(seq: &[Token], sfn: u16) -> Result<SlotRecord, TokenizeError> {
    check_syntax(seq)?;

    let digit = seq[0].hex_value().unwrap();
    let slot_id = SlotId::new(sfn, digit).ok_or(TokenizeError::InvalidValue {
        position: 0,
        detail: format!("slot {sfn}.{digit}"),
    })?;
    let mut messages = Vec::new();
    let mut pos = 2;
    while seq[pos] != Token::SEMICOLON {
        if seq[pos] == Token::EMPTY {
            pos += 1;
            continue;
        }
        if seq[pos] == Token::COMMA {
            pos += 1;
        }
        let kind = seq[pos]
            .channel_kind()
            .expect("grammar guarantees a channel");
        pos += 1;
        let mut msg = ChannelMessage::new(kind, None, None, None);
        if seq[pos].is_hex() {
            let hi = seq[pos].hex_value().unwrap();
            let lo = seq[pos + 1].hex_value().unwrap();
            msg.rnti = Some(hi << 4 | lo);
            pos += 2;
        }
        if seq[pos] == Token::LBRACKET {
            let (start, end, next) = read_group(seq, pos);
            msg.freq =
                Some(
                    Interval::prb(start, end).map_err(|e| TokenizeError::InvalidValue {
                        position: pos,
                        detail: e.to_string(),
                    })?,
                );
            pos = next;
        }
        if seq[pos] == Token::LPAREN {
            let (start, end, next) = read_group(seq, pos);
            msg.time =
                Some(
                    Interval::symbols(start, end).map_err(|e| TokenizeError::InvalidValue {
                        position: pos,
                        detail: e.to_string(),
                    })?,
                );
            pos = next;
        }
        messages.push(msg);
    }
    Ok(SlotRecord { slot_id, messages })
}

/// Runs the grammar over a single slot, accepting any leading slot digit.
fn check_syntax(seq: &[Token]) -> Result<(), TokenizeError> {
    let mut state = SlotGrammarState::any_slot();
    for (position, &tok) in seq.iter().enumerate() {
        if state.is_done() {
            return Err(TokenizeError::Syntax {
                position,
                kind: ViolationKind::UnexpectedToken,
            });
        }
        state = state.feed(tok).map_err(|e| TokenizeError::Syntax {
            position,
            kind: e.kind,
        })?;
    }
    if state.is_done() {
        return Ok(());
    }
    let kind = match state.phase() {
        Phase::InFreqOpen
        | Phase::InFreqFirstNum
        | Phase::InFreqComma
        | Phase::InFreqSecondNum
        | Phase::InTimeOpen
        | Phase::InTimeFirstNum
        | Phase::InTimeComma
        | Phase::InTimeSecondNum => ViolationKind::UnclosedBracket,
        _ => ViolationKind::MissingSeparator,
    };
    Err(TokenizeError::Syntax {
        position: seq.len().saturating_sub(1),
        kind,
    })
}

/// Reads `open num , num close` starting at the opener; returns the bounds
/// and the index after the closer.
fn read_group(seq: &[Token], open: usize) -> (u32, u32, usize) {
    let mut pos = open + 1;
    let read_num = |pos: &mut usize| {
        let mut v = 0u32;
        while let Some(d) = seq[*pos].hex_value() {
            v = v * 16 + d as u32;
            *pos += 1;
        }
        v
    };
    let start = read_num(&mut pos);
    pos += 1; // comma
    let end = read_num(&mut pos);
    (start, end, pos + 1)
}

/// Decodes a multi-slot sequence into contiguous records beginning at `first`.
/// The slot digits must count up from `first`.
pub fn decode_stream(seq: &[Token], first: SlotId) -> Result<Vec<SlotRecord>, TokenizeError> {
    let offsets = slot_offsets(seq);
    let mut id = first;
    let mut out = Vec::with_capacity(offsets.len());
    for w in offsets.windows(2) {
        let rec = decode_slot(&seq[w[0]..w[1]], id.sfn()).map_err(|e| shift(e, w[0]))?;
        if rec.slot_id != id {
            return Err(TokenizeError::Syntax {
                position: w[0],
                kind: ViolationKind::WrongSlotDigit,
            });
        }
        out.push(rec);
        id = id.next();
    }
    Ok(out)
}

fn shift(err: TokenizeError, by: usize) -> TokenizeError {
    match err {
        TokenizeError::Syntax { position, kind } => TokenizeError::Syntax {
            position: position + by,
            kind,
        },
        TokenizeError::InvalidValue { position, detail } => TokenizeError::InvalidValue {
            position: position + by,
            detail,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phylog::ChannelKind;
    use crate::slottok::{encode_slot, encode_stream, parse_tokens};

    fn toks(s: &str) -> Vec<Token> {
        parse_tokens(s).unwrap()
    }

    #[test]
    fn decodes_table_slot() {
        let rec = decode_slot(
            &toks("8 : PDCCH-DCI1_0 0 1 , PDSCH 0 1 [ 0 , 6 0 ] ( 1 , E ) ;"),
            265,
        )
        .unwrap();
        assert_eq!(rec.slot_id, SlotId::new(265, 8).unwrap());
        assert_eq!(
            rec.messages,
            vec![
                ChannelMessage::pdcch(ChannelKind::PdcchDci10, 1),
                ChannelMessage::new(
                    ChannelKind::Pdsch,
                    Some(1),
                    Some(Interval::prb(0, 96).unwrap()),
                    Some(Interval::symbols(1, 14).unwrap()),
                ),
            ]
        );
    }

    #[test]
    fn decodes_empty_slot() {
        let rec = decode_slot(&toks("0 : EMPTY ;"), 0).unwrap();
        assert_eq!(rec, SlotRecord::empty(SlotId::new(0, 0).unwrap()));
    }

    #[test]
    fn unclosed_bracket() {
        assert_eq!(
            decode_slot(&toks("8 : PDSCH [ 0 ;"), 0),
            Err(TokenizeError::Syntax {
                position: 5,
                kind: ViolationKind::UnclosedBracket
            })
        );
    }

    #[test]
    fn rejects_trailing_tokens_and_bad_intervals() {
        assert!(matches!(
            decode_slot(&toks("0 : EMPTY ; 1"), 0),
            Err(TokenizeError::Syntax { position: 4, .. })
        ));
        assert!(matches!(
            decode_slot(&toks("0 : PDSCH 0 1 [ 9 , 2 ] ;"), 0),
            Err(TokenizeError::InvalidValue { .. })
        ));
        assert!(matches!(
            decode_slot(&toks("0 : PUCCH ( 0 , F ) ;"), 0),
            Err(TokenizeError::InvalidValue { .. })
        ));
        assert!(decode_slot(&[], 0).is_err());
    }

    #[test]
    fn prach_without_rnti() {
        let rec = decode_slot(&toks("2 : PRACH [ 0 , C ] ( 0 , E ) ;"), 7).unwrap();
        assert_eq!(rec.messages[0].rnti, None);
        assert_eq!(
            encode_slot(&rec).unwrap(),
            toks("2 : PRACH [ 0 , C ] ( 0 , E ) ;")
        );
    }

    #[test]
    fn stream_round_trip() {
        let first = SlotId::new(1023, 8).unwrap();
        let recs = vec![
            SlotRecord::empty(first),
            SlotRecord::empty(first.next()),
            SlotRecord::empty(first.next().next()),
        ];
        let seq = encode_stream(&recs).unwrap();
        assert_eq!(decode_stream(&seq, first).unwrap(), recs);
        assert!(decode_stream(&seq, first.next()).is_err());
    }
}
