//! On-disk token formats.
//!
//! * Binary: the 5-byte magic `SLTK1` followed by one byte per token id.
//! * Text (`.tokens`): one slot per line, token names separated by single
//!   spaces, each line terminated by `\n`.

use std::io::{self, Read, Write};

use super::{render_tokens, slot_offsets, Token};

pub const MAGIC: &[u8; 5] = b"SLTK1";

pub fn write_binary<W: Write>(mut w: W, tokens: &[Token]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    let bytes: Vec<u8> = tokens.iter().map(|t| t.id()).collect();
    w.write_all(&bytes)
}

pub fn read_binary<R: Read>(mut r: R) -> io::Result<Vec<Token>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let body = buf
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing SLTK1 magic"))?;
    body.iter()
        .map(|&b| {
            Token::new(b).ok_or_else(|| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("token id {b} out of range"),
                )
            })
        })
        .collect()
}

pub fn write_text<W: Write>(mut w: W, tokens: &[Token]) -> io::Result<()> {
    for span in slot_offsets(tokens).windows(2) {
        writeln!(w, "{}", render_tokens(&tokens[span[0]..span[1]]))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slottok::parse_tokens;

    #[test]
    fn binary_layout() {
        let toks = parse_tokens("0 : EMPTY ;").unwrap();
        let mut buf = Vec::new();
        write_binary(&mut buf, &toks).unwrap();
        assert_eq!(buf, b"SLTK1\x01\x11\x00\x12");
        assert_eq!(read_binary(buf.as_slice()).unwrap(), toks);
    }

    #[test]
    fn binary_rejects_bad_input() {
        assert!(read_binary(&b"SLTK2\x01"[..]).is_err());
        assert!(read_binary(&b"SLTK1\x20"[..]).is_err());
    }

    #[test]
    fn text_is_one_slot_per_line() {
        let toks = parse_tokens("4 : EMPTY ; 5 : PUCCH 0 1 ( 0 , E ) ;").unwrap();
        let mut buf = Vec::new();
        write_text(&mut buf, &toks).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "4 : EMPTY ;\n5 : PUCCH 0 1 ( 0 , E ) ;\n"
        );
    }
}
