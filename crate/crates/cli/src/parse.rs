//! Flag value parsers.

use anyhow::{bail, Context, Result};

pub fn floats(s: &str) -> Result<Vec<f64>> {
    let out = s
        .split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("not a number: '{t}'"))
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        bail!("empty point list");
    }
    Ok(out)
}

/// Comma-separated indices; items may be `a-b` or `a-b:step` (inclusive).
pub fn indices(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("not a non-negative integer: '{t}'"))
        };
        match item.split_once('-') {
            None => out.push(num(item)?),
            Some((a, rest)) => {
                let (b, step) = match rest.split_once(':') {
                    Some((b, st)) => (num(b)?, num(st)?),
                    None => (num(rest)?, 1),
                };
                let a = num(a)?;
                if step == 0 || b < a {
                    bail!("bad range '{item}'");
                }
                out.extend((a..=b).step_by(step));
            }
        }
    }
    if out.is_empty() {
        bail!("empty index list");
    }
    Ok(out)
}

/// `N` or `HxW`.
pub fn image_size(s: &str) -> Result<(usize, usize)> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .with_context(|| format!("bad size '{s}'"))
    };
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lists() {
        assert_eq!(indices("0,2,5").unwrap(), vec![0, 2, 5]);
        assert_eq!(indices("0-3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(indices("0-12:4,20").unwrap(), vec![0, 4, 8, 12, 20]);
        assert!(indices("").is_err());
        assert!(indices("3-1").is_err());
        assert!(indices("a").is_err());
    }

    #[test]
    fn float_lists_and_sizes() {
        assert_eq!(floats("1, 2.5").unwrap(), vec![1.0, 2.5]);
        assert!(floats(" ").is_err());
        assert_eq!(image_size("16").unwrap(), (16, 16));
        assert_eq!(image_size("8x4").unwrap(), (8, 4));
        assert!(image_size("8x").is_err());
    }
}
