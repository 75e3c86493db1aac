use std::io::{Read, Write};

use super::{EmbeddingModel, EncoderError, Vocabulary};

const MAGIC: &[u8; 8] = b"GGEMBCK1";

fn format_float(x: f64) -> String {
    // 17 significant digits: round-trips every f64
    format!("{x:.16e}")
}

/// TSV with header `#dim=D count=N` and one `token<TAB>v1<TAB>...<TAB>vD` row per entry.
pub fn write_vectors_tsv<'a, W, I>(dim: usize, rows: I, mut out: W) -> Result<(), EncoderError>
where
    W: Write,
    I: ExactSizeIterator<Item = (&'a str, &'a [f64])>,
{
    writeln!(out, "#dim={dim} count={}", rows.len())?;
    let mut line = String::new();
    for (token, v) in rows {
        if token.contains(['\t', '\n', '\r']) {
            return Err(EncoderError::UnwritableToken(token.to_string()));
        }
        line.clear();
        line.push_str(token);
        for x in v {
            line.push('\t');
            line.push_str(&format_float(*x));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Embedding export: one row per vocabulary token, in index order.
pub fn write_tsv<W: Write>(model: &EmbeddingModel, out: W) -> Result<(), EncoderError> {
    let rows = (0..model.vocab().len()).map(|i| (model.vocab().token(i), model.in_row(i)));
    write_vectors_tsv(model.dim(), rows, out)
}

fn put_u64<W: Write>(out: &mut W, v: u64) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn get_u64<R: Read>(input: &mut R) -> Result<u64, EncoderError> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf).map_err(|e| EncoderError::Checkpoint(format!("truncated: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

/// Little-endian binary dump of vocabulary and both matrices.
pub fn write_checkpoint<W: Write>(model: &EmbeddingModel, mut out: W) -> Result<(), EncoderError> {
    out.write_all(MAGIC)?;
    put_u64(&mut out, model.dim() as u64)?;
    put_u64(&mut out, model.vocab().len() as u64)?;
    for (t, &c) in model.vocab().tokens().iter().zip(model.vocab().counts()) {
        put_u64(&mut out, t.len() as u64)?;
        out.write_all(t.as_bytes())?;
        put_u64(&mut out, c)?;
    }
    for x in model.w_in().iter().chain(model.w_out()) {
        out.write_all(&x.to_bits().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<EmbeddingModel, EncoderError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| EncoderError::Checkpoint("missing header".into()))?;
    if &magic != MAGIC {
        return Err(EncoderError::Checkpoint("bad magic".into()));
    }
    let dim = get_u64(&mut input)? as usize;
    let n = get_u64(&mut input)? as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = get_u64(&mut input)? as usize;
        let mut bytes = vec![0u8; len];
        input.read_exact(&mut bytes).map_err(|e| EncoderError::Checkpoint(format!("truncated: {e}")))?;
        let token = String::from_utf8(bytes).map_err(|_| EncoderError::Checkpoint("token is not UTF-8".into()))?;
        entries.push((token, get_u64(&mut input)?));
    }
    let mut read_matrix = || -> Result<Vec<f64>, EncoderError> {
        (0..n * dim).map(|_| get_u64(&mut input).map(f64::from_bits)).collect()
    };
    let w_in = read_matrix()?;
    let w_out = read_matrix()?;
    EmbeddingModel::from_parts(Vocabulary::from_entries(entries)?, dim, w_in, w_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::TrainingPair;

    fn model() -> EmbeddingModel {
        let pairs = vec![TrainingPair { center: "a".into(), context: vec!["k=v".into(), "b".into()] }];
        let vocab = Vocabulary::build(&pairs).unwrap();
        let mut m = EmbeddingModel::initialize(vocab, 3, 9);
        m.w_out_mut()[4] = -1.0 / 3.0;
        m
    }

    #[test]
    fn tsv_header_and_columns() {
        let m = model();
        let mut buf = Vec::new();
        write_tsv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "#dim=3 count=3");
        assert_eq!(lines.len(), 4);
        for (i, line) in lines[1..].iter().enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            assert_eq!(cols.len(), 4);
            assert_eq!(cols[0], m.vocab().token(i));
            for (c, x) in cols[1..].iter().zip(m.in_row(i)) {
                assert_eq!(c.parse::<f64>().unwrap(), *x);
            }
        }
    }

    #[test]
    fn tabs_in_tokens_are_rejected() {
        let rows = [("bad\ttoken", &[1.0][..])];
        let err = write_vectors_tsv(1, rows.into_iter(), Vec::new()).unwrap_err();
        assert!(matches!(err, EncoderError::UnwritableToken(_)));
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), m);
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        assert!(read_checkpoint(&b"NOTACKPT"[..]).is_err());
    }
}
