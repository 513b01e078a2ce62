//! Slot grammar automaton.
//!
//! The same automaton serves as a post-hoc validator ([`validate`]) and as an
//! incremental allowed-next-token oracle for constrained decoding
//! ([`SlotGrammarState::allowed_next`]).
//!
//! Grammar for one slot (`d` is the expected slot digit, counting up with 0
//! after 9; `h` is a hex digit):
//!
//! ```text
//! slot    := d ':' ( EMPTY | channel ( ',' channel )* ) ';'
//! channel := CH [ h h ] [ '[' num ',' num ']' ] [ '(' num ',' num ')' ]
//! num     := h | h h
//! ```
//!
//! PDCCH channel tokens take no interval groups.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phylog::SLOTS_PER_FRAME;
use crate::slottok::{Token, VOCAB_SIZE};

/// Longest number inside an interval group, in hex digits.
pub const MAX_NUMBER_DIGITS: u8 = 2;

/// Boolean mask over the vocabulary.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct TokenMask([bool; VOCAB_SIZE]);

impl TokenMask {
    pub fn none() -> Self {
        TokenMask([false; VOCAB_SIZE])
    }

    pub fn all() -> Self {
        TokenMask([true; VOCAB_SIZE])
    }

    pub fn allow(&mut self, t: Token) {
        self.0[t.index()] = true;
    }

    pub fn allows(&self, t: Token) -> bool {
        self.0[t.index()]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        Token::all().filter(|t| self.allows(*t))
    }

    fn allow_hex(&mut self) {
        (0..16).for_each(|d| self.allow(Token::hex(d)));
    }

    fn allow_channels(&mut self) {
        Token::all()
            .filter(|t| t.is_channel())
            .for_each(|t| self.allow(t));
    }
}

impl fmt::Debug for TokenMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.tokens()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    ExpectSlotDigit,
    ExpectColon,
    ExpectChannelOrEmpty,
    /// After a separating comma: EMPTY is no longer allowed.
    ExpectChannel,
    /// After EMPTY.
    ExpectSemicolon,
    InChannelAfterName,
    InRntiDigit2,
    AfterRnti,
    InFreqOpen,
    InFreqFirstNum,
    InFreqComma,
    InFreqSecondNum,
    AfterFreq,
    InTimeOpen,
    InTimeFirstNum,
    InTimeComma,
    InTimeSecondNum,
    ExpectCommaOrSemicolon,
    Done,
}

impl Phase {
    fn in_group(self) -> bool {
        matches!(
            self,
            Phase::InFreqOpen
                | Phase::InFreqFirstNum
                | Phase::InFreqComma
                | Phase::InFreqSecondNum
                | Phase::InTimeOpen
                | Phase::InTimeFirstNum
                | Phase::InTimeComma
                | Phase::InTimeSecondNum
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    WrongSlotDigit,
    MissingColon,
    BadChannelStart,
    UnclosedBracket,
    BracketArity,
    MissingSeparator,
    UnexpectedToken,
    EmptyMisplaced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub position: usize,
    pub category: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal token {token} ({kind:?}) in phase {phase:?}")]
pub struct IllegalToken {
    pub token: Token,
    pub kind: ViolationKind,
    pub phase: Phase,
}

/// Position of the automaton inside one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotGrammarState {
    phase: Phase,
    /// `None` accepts any slot digit (no context to count from).
    expected_slot_digit: Option<u8>,
    digits_in_current_number: u8,
    in_pdcch: bool,
}

impl SlotGrammarState {
    pub fn new(expected_slot_digit: u8) -> Self {
        assert!(expected_slot_digit < SLOTS_PER_FRAME);
        Self::with_expected(Some(expected_slot_digit))
    }

    /// Start state that accepts whichever slot digit comes first.
    pub fn any_slot() -> Self {
        Self::with_expected(None)
    }

    fn with_expected(expected_slot_digit: Option<u8>) -> Self {
        SlotGrammarState {
            phase: Phase::ExpectSlotDigit,
            expected_slot_digit,
            digits_in_current_number: 0,
            in_pdcch: false,
        }
    }

    /// Start state for the slot that follows `context`.
    ///
    /// The expected digit is taken from the last complete slot in the context.
    pub fn after_context(context: &[Token]) -> Self {
        let last_digit = context
            .iter()
            .enumerate()
            .filter(|(i, t)| {
                t.hex_value().is_some_and(|d| d < SLOTS_PER_FRAME)
                    && context.get(i + 1) == Some(&Token::COLON)
                    && (*i == 0 || context[i - 1] == Token::SEMICOLON)
            })
            .map(|(_, t)| t.hex_value().unwrap())
            .next_back();
        match last_digit {
            Some(d) if context.last() == Some(&Token::SEMICOLON) => {
                Self::new((d + 1) % SLOTS_PER_FRAME)
            }
            _ => Self::any_slot(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn expected_slot_digit(&self) -> Option<u8> {
        self.expected_slot_digit
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Start of the next slot. Only meaningful after `Done`; the expected
    /// digit has already been advanced.
    pub fn reset(&self) -> Self {
        Self::with_expected(self.expected_slot_digit)
    }

    /// Tokens the grammar permits next. Never empty; on `Done` this is the
    /// mask for the first token of the following slot.
    pub fn allowed_next(&self) -> TokenMask {
        let mut m = TokenMask::none();
        let room = self.digits_in_current_number < MAX_NUMBER_DIGITS;
        match self.phase {
            Phase::ExpectSlotDigit | Phase::Done => match self.expected_slot_digit {
                Some(d) => m.allow(Token::hex(d)),
                None => (0..SLOTS_PER_FRAME).for_each(|d| m.allow(Token::hex(d))),
            },
            Phase::ExpectColon => m.allow(Token::COLON),
            Phase::ExpectChannelOrEmpty => {
                m.allow_channels();
                m.allow(Token::EMPTY);
            }
            Phase::ExpectChannel => m.allow_channels(),
            Phase::ExpectSemicolon => m.allow(Token::SEMICOLON),
            Phase::InChannelAfterName | Phase::AfterRnti => {
                if self.phase == Phase::InChannelAfterName {
                    m.allow_hex();
                }
                if !self.in_pdcch {
                    m.allow(Token::LBRACKET);
                    m.allow(Token::LPAREN);
                }
                m.allow(Token::COMMA);
                m.allow(Token::SEMICOLON);
            }
            Phase::InRntiDigit2 => m.allow_hex(),
            Phase::InFreqOpen | Phase::InFreqComma | Phase::InTimeOpen | Phase::InTimeComma => {
                m.allow_hex()
            }
            Phase::InFreqFirstNum | Phase::InTimeFirstNum => {
                if room {
                    m.allow_hex();
                }
                m.allow(Token::COMMA);
            }
            Phase::InFreqSecondNum => {
                if room {
                    m.allow_hex();
                }
                m.allow(Token::RBRACKET);
            }
            Phase::InTimeSecondNum => {
                if room {
                    m.allow_hex();
                }
                m.allow(Token::RPAREN);
            }
            Phase::AfterFreq => {
                m.allow(Token::LPAREN);
                m.allow(Token::COMMA);
                m.allow(Token::SEMICOLON);
            }
            Phase::ExpectCommaOrSemicolon => {
                m.allow(Token::COMMA);
                m.allow(Token::SEMICOLON);
            }
        }
        m
    }

    /// Advances by one token. `Done` only accepts tokens after [`reset`](Self::reset).
    pub fn feed(&self, token: Token) -> Result<Self, IllegalToken> {
        if self.phase == Phase::Done || !self.allowed_next().allows(token) {
            return Err(IllegalToken {
                token,
                kind: self.classify(token),
                phase: self.phase,
            });
        }
        let mut next = *self;
        next.phase = match (self.phase, token) {
            (Phase::ExpectSlotDigit, t) => {
                next.expected_slot_digit = t.hex_value();
                Phase::ExpectColon
            }
            (Phase::ExpectColon, _) => Phase::ExpectChannelOrEmpty,
            (Phase::ExpectChannelOrEmpty, Token::EMPTY) => Phase::ExpectSemicolon,
            (Phase::ExpectChannelOrEmpty | Phase::ExpectChannel, t) => {
                next.in_pdcch = t.channel_kind().is_some_and(|k| k.is_pdcch());
                Phase::InChannelAfterName
            }
            (_, Token::SEMICOLON) => {
                next.expected_slot_digit =
                    next.expected_slot_digit.map(|d| (d + 1) % SLOTS_PER_FRAME);
                Phase::Done
            }
            (Phase::InChannelAfterName, t) if t.is_hex() => Phase::InRntiDigit2,
            (Phase::InRntiDigit2, _) => Phase::AfterRnti,
            (_, Token::LBRACKET) => Phase::InFreqOpen,
            (_, Token::LPAREN) => Phase::InTimeOpen,
            (Phase::InFreqFirstNum, Token::COMMA) => Phase::InFreqComma,
            (Phase::InTimeFirstNum, Token::COMMA) => Phase::InTimeComma,
            (_, Token::COMMA) => Phase::ExpectChannel,
            (Phase::InFreqOpen | Phase::InFreqFirstNum, _) => Phase::InFreqFirstNum,
            (Phase::InFreqComma | Phase::InFreqSecondNum, Token::RBRACKET) => Phase::AfterFreq,
            (Phase::InFreqComma | Phase::InFreqSecondNum, _) => Phase::InFreqSecondNum,
            (Phase::InTimeOpen | Phase::InTimeFirstNum, _) => Phase::InTimeFirstNum,
            (Phase::InTimeComma | Phase::InTimeSecondNum, Token::RPAREN) => {
                Phase::ExpectCommaOrSemicolon
            }
            (Phase::InTimeComma | Phase::InTimeSecondNum, _) => Phase::InTimeSecondNum,
            (phase, t) => unreachable!("mask admitted {t} in {phase:?}"),
        };
        next.digits_in_current_number = match next.phase {
            Phase::InFreqFirstNum
            | Phase::InFreqSecondNum
            | Phase::InTimeFirstNum
            | Phase::InTimeSecondNum => self.digits_in_current_number + 1,
            _ => 0,
        };
        Ok(next)
    }

    fn classify(&self, token: Token) -> ViolationKind {
        use ViolationKind::*;
        if token == Token::EMPTY {
            return EmptyMisplaced;
        }
        let closer = matches!(token, Token::RBRACKET | Token::RPAREN);
        match self.phase {
            Phase::ExpectSlotDigit => WrongSlotDigit,
            Phase::ExpectColon => MissingColon,
            Phase::ExpectChannelOrEmpty | Phase::ExpectChannel => BadChannelStart,
            Phase::ExpectSemicolon => EmptyMisplaced,
            Phase::InRntiDigit2 | Phase::Done => UnexpectedToken,
            Phase::InFreqOpen | Phase::InTimeOpen | Phase::InFreqComma | Phase::InTimeComma => {
                if token == Token::COMMA || closer {
                    BracketArity
                } else {
                    UnclosedBracket
                }
            }
            Phase::InFreqFirstNum | Phase::InTimeFirstNum => {
                if token.is_hex() || closer && self.closer_matches(token) {
                    BracketArity
                } else {
                    UnclosedBracket
                }
            }
            Phase::InFreqSecondNum | Phase::InTimeSecondNum => {
                if token.is_hex() || token == Token::COMMA {
                    BracketArity
                } else {
                    UnclosedBracket
                }
            }
            Phase::InChannelAfterName
            | Phase::AfterRnti
            | Phase::AfterFreq
            | Phase::ExpectCommaOrSemicolon => {
                if token.is_channel() || token.is_hex() {
                    MissingSeparator
                } else {
                    UnexpectedToken
                }
            }
        }
    }

    fn closer_matches(&self, token: Token) -> bool {
        match self.phase {
            Phase::InFreqFirstNum => token == Token::RBRACKET,
            Phase::InTimeFirstNum => token == Token::RPAREN,
            _ => false,
        }
    }
}

/// Checks a multi-slot sequence, starting at `starting_slot_digit`.
///
/// After a violation the checker skips to the next semicolon and continues
/// with the following slot, so each slot contributes at most one violation.
/// An empty result means every slot is well formed.
pub fn validate(seq: &[Token], starting_slot_digit: u8) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut state = SlotGrammarState::new(starting_slot_digit);
    let mut slot_expected = starting_slot_digit;
    let mut skipping = false;
    for (pos, &tok) in seq.iter().enumerate() {
        if skipping {
            if tok == Token::SEMICOLON {
                skipping = false;
                slot_expected = (slot_expected + 1) % SLOTS_PER_FRAME;
                state = SlotGrammarState::new(slot_expected);
            }
            continue;
        }
        match state.feed(tok) {
            Ok(next) if next.is_done() => {
                slot_expected = next.expected_slot_digit.unwrap();
                state = next.reset();
            }
            Ok(next) => state = next,
            Err(err) => {
                violations.push(Violation {
                    position: pos,
                    category: err.kind,
                    detail: format!("{} not allowed in {:?}", tok, err.phase),
                });
                if tok == Token::SEMICOLON {
                    slot_expected = (slot_expected + 1) % SLOTS_PER_FRAME;
                    state = SlotGrammarState::new(slot_expected);
                } else {
                    skipping = true;
                }
            }
        }
    }
    let mid_slot = state.phase != Phase::ExpectSlotDigit;
    if !seq.is_empty() && !skipping && mid_slot {
        violations.push(Violation {
            position: seq.len() - 1,
            category: if state.phase.in_group() {
                ViolationKind::UnclosedBracket
            } else {
                ViolationKind::MissingSeparator
            },
            detail: "sequence ends inside a slot".into(),
        });
    }
    violations
}

#[cfg(test)]
mod tests {
    use std::collections::{HashSet, VecDeque};

    use super::*;
    use crate::slottok::parse_tokens;

    fn toks(s: &str) -> Vec<Token> {
        parse_tokens(s).unwrap()
    }

    fn run(state: SlotGrammarState, s: &str) -> SlotGrammarState {
        toks(s).into_iter().fold(state, |st, t| st.feed(t).unwrap())
    }

    fn mask_of(names: &str) -> TokenMask {
        let mut m = TokenMask::none();
        toks(names).into_iter().for_each(|t| m.allow(t));
        m
    }

    #[test]
    fn fresh_state_allows_only_expected_digit() {
        assert_eq!(SlotGrammarState::new(8).allowed_next(), mask_of("8"));
    }

    #[test]
    fn after_rnti_allows_groups_and_separators() {
        let st = run(SlotGrammarState::new(8), "8 : PDSCH 0 1");
        assert_eq!(st.allowed_next(), mask_of("[ ( , ;"));
    }

    #[test]
    fn inside_first_number() {
        let st = run(SlotGrammarState::new(8), "8 : PDSCH 0 1 [ 0");
        assert_eq!(
            st.allowed_next(),
            mask_of(", 0 1 2 3 4 5 6 7 8 9 A B C D E F")
        );
        let st = run(st, "1");
        assert_eq!(st.allowed_next(), mask_of(","));
    }

    #[test]
    fn pdcch_takes_no_groups() {
        let st = run(SlotGrammarState::new(0), "0 : PDCCH-DCI1_0 0 1");
        assert_eq!(st.allowed_next(), mask_of(", ;"));
    }

    #[test]
    fn table_slot_reaches_done() {
        let st = run(
            SlotGrammarState::new(8),
            "8 : PDCCH-DCI1_0 0 1 , PDSCH 0 1 [ 0 , 6 0 ] ( 1 , E ) ;",
        );
        assert!(st.is_done());
        assert_eq!(st.expected_slot_digit(), Some(9));
    }

    #[test]
    fn empty_slot_and_wrap() {
        let st = run(SlotGrammarState::new(9), "9 : EMPTY ;");
        assert_eq!(st.expected_slot_digit(), Some(0));
        let st = run(SlotGrammarState::new(0), "0 : EMPTY ;");
        assert_eq!(st.expected_slot_digit(), Some(1));
    }

    #[test]
    fn wrong_digit_is_illegal() {
        let err = SlotGrammarState::new(8).feed(Token::hex(5)).unwrap_err();
        assert_eq!(err.kind, ViolationKind::WrongSlotDigit);
    }

    #[test]
    fn done_absorbs_until_reset() {
        let st = run(SlotGrammarState::new(0), "0 : EMPTY ;");
        assert!(st.feed(Token::hex(1)).is_err());
        assert!(st.reset().feed(Token::hex(1)).is_ok());
    }

    #[test]
    fn validate_reports_missing_colon() {
        let v = validate(&toks("8 PDSCH ;"), 8);
        assert_eq!(v.len(), 1);
        assert_eq!(
            (v[0].position, v[0].category),
            (1, ViolationKind::MissingColon)
        );
    }

    #[test]
    fn validate_accepts_prediction_with_extra_pucch() {
        let pred =
            toks("8 : PDCCH-DCI1_0 0 1 , PDSCH 0 1 [ 0 , 6 0 ] ( 1 , E ) , PUCCH 0 1 ( 0 , E ) ;");
        assert_eq!(pred.len(), 30);
        assert!(validate(&pred, 8).is_empty());
    }

    #[test]
    fn validate_resynchronizes_per_slot() {
        let seq = toks("8 : PDSCH [ 0 ; 9 : EMPTY ; 1 : EMPTY ; 1 : PUCCH PUCCH ;");
        let v = validate(&seq, 8);
        let cats: Vec<_> = v.iter().map(|v| (v.position, v.category)).collect();
        assert_eq!(
            cats,
            vec![
                (5, ViolationKind::UnclosedBracket),
                (10, ViolationKind::WrongSlotDigit),
                (17, ViolationKind::MissingSeparator),
            ]
        );
    }

    #[test]
    fn violation_categories() {
        let cat = |s: &str| validate(&toks(s), 0)[0].category;
        assert_eq!(cat("0 : , ;"), ViolationKind::BadChannelStart);
        assert_eq!(cat("0 : PDSCH 0 1 [ 0 ] ;"), ViolationKind::BracketArity);
        assert_eq!(
            cat("0 : PDSCH 0 1 [ 0 , 1 2 3 ] ;"),
            ViolationKind::BracketArity
        );
        assert_eq!(
            cat("0 : PDSCH 0 1 [ 0 , 1 ) ;"),
            ViolationKind::UnclosedBracket
        );
        assert_eq!(cat("0 : PDSCH EMPTY ;"), ViolationKind::EmptyMisplaced);
        assert_eq!(cat("0 : EMPTY , PDSCH ;"), ViolationKind::EmptyMisplaced);
        assert_eq!(
            cat("0 : PDSCH ( 0 , E ) [ 0 , 1 ] ;"),
            ViolationKind::UnexpectedToken
        );
        assert_eq!(cat("0 : PDSCH 0 1"), ViolationKind::MissingSeparator);
        assert_eq!(cat("0 : PDSCH 0 1 [ 0"), ViolationKind::UnclosedBracket);
    }

    #[test]
    fn empty_sequence_is_valid() {
        assert!(validate(&[], 3).is_empty());
    }

    #[test]
    fn after_context_counts_from_last_slot() {
        let ctx = toks("8 : EMPTY ; 9 : PUCCH 0 1 ( 0 , E ) ;");
        assert_eq!(
            SlotGrammarState::after_context(&ctx).expected_slot_digit(),
            Some(0)
        );
        assert_eq!(
            SlotGrammarState::after_context(&[]).expected_slot_digit(),
            None
        );
    }

    /// Exhaustive walk of every reachable state: masks are never empty and a
    /// semicolon stays reachable.
    #[test]
    fn liveness_over_reachable_states() {
        let mut seen = HashSet::new();
        let mut queue: VecDeque<_> = (0..10).map(SlotGrammarState::new).collect();
        queue.push_back(SlotGrammarState::any_slot());
        while let Some(st) = queue.pop_front() {
            if !seen.insert(st) {
                continue;
            }
            let mask = st.allowed_next();
            assert!(!mask.is_empty(), "{st:?}");
            if st.is_done() {
                continue;
            }
            for t in mask.tokens() {
                queue.push_back(st.feed(t).unwrap());
            }
        }
        // every reachable state can reach Done
        for st in &seen {
            let mut frontier = vec![*st];
            let mut visited = HashSet::new();
            let mut ok = false;
            while let Some(s) = frontier.pop() {
                if s.is_done() {
                    ok = true;
                    break;
                }
                if visited.insert(s) {
                    frontier.extend(s.allowed_next().tokens().map(|t| s.feed(t).unwrap()));
                }
            }
            assert!(ok, "{st:?} cannot finish its slot");
        }
        assert!(seen.len() > 30);
    }
}
