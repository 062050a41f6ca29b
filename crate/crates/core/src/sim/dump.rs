use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::population::AtomRecord;

pub const DUMP_HEADER: &str = "replica,id,parent,generation,birth_time,position";

/// Writes atoms as CSV rows; the root's parent column is left empty.
/// Reals are printed with 17 significant digits, so reading back is lossless.
pub fn write_atoms_csv<W: Write>(out: &mut W, replica: u64, atoms: &[AtomRecord], header: bool) -> Result<()> {
    if header {
        writeln!(out, "{DUMP_HEADER}")?;
    }
    for a in atoms {
        let parent = a.parent.map(|p| p.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{replica},{},{parent},{},{:.16e},{:.16e}",
            a.id, a.generation, a.birth_time, a.position
        )?;
    }
    Ok(())
}

/// Reads a dump back, grouping atoms by replica.
pub fn read_atoms_csv<R: BufRead>(input: R) -> Result<BTreeMap<u64, Vec<AtomRecord>>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(DUMP_HEADER) {
        return Err(Error::Parse(format!("missing header `{DUMP_HEADER}`")));
    }
    let mut out: BTreeMap<u64, Vec<AtomRecord>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let bad = |what: &str| Error::Parse(format!("line {lineno}: bad {what}"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse(format!("line {lineno}: expected 6 fields, got {}", f.len())));
        }
        let replica: u64 = f[0].parse().map_err(|_| bad("replica"))?;
        let parent = if f[2].is_empty() {
            None
        } else {
            Some(f[2].parse().map_err(|_| bad("parent"))?)
        };
        out.entry(replica).or_default().push(AtomRecord {
            id: f[1].parse().map_err(|_| bad("id"))?,
            parent,
            generation: f[3].parse().map_err(|_| bad("generation"))?,
            birth_time: f[4].parse().map_err(|_| bad("birth_time"))?,
            position: f[5].parse().map_err(|_| bad("position"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{normalize_lambda, Alpha, LambdaSpec};
    use crate::sim::{count_atoms, simulate_population, Caps, Window};

    #[test]
    fn round_trip_preserves_counts() {
        let m = normalize_lambda(&LambdaSpec::single(vec![1.0, 2.5]).unwrap(), Alpha::new(0.7).unwrap());
        let pop = simulate_population(&m, Window::new(1.5, 2.0).unwrap(), 17, Caps::default());
        let mut buf = Vec::new();
        write_atoms_csv(&mut buf, 3, &pop.atoms, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(DUMP_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("3,0,,0,"));
        let back = read_atoms_csv(buf.as_slice()).unwrap();
        let atoms = &back[&3];
        assert_eq!(atoms, &pop.atoms);
        for i in 0..=10 {
            let (t, x) = (0.15 * i as f64, 0.2 * i as f64);
            assert_eq!(count_atoms(atoms, t, x), pop.count_cdf(t, x).unwrap());
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_atoms_csv("nope\n".as_bytes()).is_err());
        let s = format!("{DUMP_HEADER}\n0,0,,0,0.0\n");
        assert!(read_atoms_csv(s.as_bytes()).is_err());
    }
}
