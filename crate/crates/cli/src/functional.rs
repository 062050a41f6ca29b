//! Text form of spine functionals: factors joined by `*`, each one of
//! `x<i><=<a>`, `a<i><=<a>`, `x<i>`, `a<i>` or a number. Example: `x2<=1*a1`.

use anyhow::{anyhow, bail, Result};
use bstable::Functional;

pub fn parse_functional(s: &str) -> Result<Functional> {
    let factors = s
        .split('*')
        .map(|f| parse_factor(f.trim()))
        .collect::<Result<Vec<_>>>()?;
    Ok(if factors.len() == 1 {
        factors.into_iter().next().expect("one factor")
    } else {
        Functional::Product(factors)
    })
}

fn parse_factor(f: &str) -> Result<Functional> {
    if f.is_empty() {
        bail!("empty factor in functional");
    }
    if let Ok(c) = f.parse::<f64>() {
        return Ok(Functional::Const(c));
    }
    let (head, bound) = match f.split_once("<=") {
        Some((h, b)) => (h, Some(b.parse::<f64>().map_err(|_| anyhow!("bad bound in `{f}`"))?)),
        None => (f, None),
    };
    let kind = head.chars().next().expect("non-empty");
    let i: usize = head[1..].parse().map_err(|_| anyhow!("bad index in `{f}`"))?;
    Ok(match (kind, bound) {
        ('x', Some(a)) => Functional::PosBelow { i, a },
        ('a', Some(a)) => Functional::AgeBelow { i, a },
        ('x', None) => Functional::Pos { i },
        ('a', None) => Functional::Age { i },
        _ => bail!("unknown factor `{f}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_products() {
        assert_eq!(parse_functional("x1<=1").unwrap(), Functional::PosBelow { i: 1, a: 1.0 });
        assert_eq!(
            parse_functional("x2<=1 * a1").unwrap(),
            Functional::Product(vec![Functional::PosBelow { i: 2, a: 1.0 }, Functional::Age { i: 1 }])
        );
        assert_eq!(parse_functional("0").unwrap(), Functional::Const(0.0));
        assert!(parse_functional("y1").is_err());
        assert!(parse_functional("x<=1").is_err());
        assert!(parse_functional("x1*").is_err());
    }
}
