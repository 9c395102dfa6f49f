//! Minimal s-expression reader for solver responses.

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            Sexp::Atom(_) => None,
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Parse every top-level s-expression in `text`. `;` comments are skipped;
/// `"..."` strings and `|...|` symbols are kept as single atoms.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, String> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().filter(|_| !stack.is_empty());
                match (done, stack.last_mut()) {
                    (Some(items), Some(parent)) => parent.push(Sexp::List(items)),
                    _ => return Err(format!("unbalanced `)` at offset {i}")),
                }
            }
            ';' => while chars.next_if(|&(_, c)| c != '\n').is_some() {},
            c if c.is_whitespace() => {}
            '"' | '|' => {
                let mut atom = String::from(c);
                loop {
                    match chars.next() {
                        Some((_, d)) => {
                            atom.push(d);
                            if d == c {
                                break;
                            }
                        }
                        None => return Err(format!("unterminated {c} at offset {i}")),
                    }
                }
                stack.last_mut().expect("stack never empty").push(Sexp::Atom(atom));
            }
            _ => {
                let mut atom = String::from(c);
                while let Some((_, d)) =
                    chars.next_if(|&(_, d)| !d.is_whitespace() && !matches!(d, '(' | ')' | ';'))
                {
                    atom.push(d);
                }
                stack.last_mut().expect("stack never empty").push(Sexp::Atom(atom));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced `(`".to_string());
    }
    Ok(stack.pop().unwrap_or_default())
}
