use super::{GraphPattern, Projection, Query, TermPattern, TriplePattern};
use crate::store::Term;

/// Prints a query so that [`super::parse_query`] reads back the same tree.
pub fn pattern_to_text(q: &Query) -> String {
    let mut out = String::new();
    for (prefix, iri) in &q.prefixes {
        out.push_str(&format!("PREFIX {prefix}: <{iri}>\n"));
    }
    out.push_str("SELECT ");
    match &q.projection {
        Projection::All => out.push('*'),
        Projection::Vars(vars) => {
            let names: Vec<String> = vars.iter().map(|v| v.to_string()).collect();
            out.push_str(&names.join(" "));
        }
    }
    out.push_str(" WHERE ");
    let printer = Printer {
        prefixes: &q.prefixes,
    };
    match &q.body {
        GraphPattern::Group(inner) => printer.group(inner, 0, &mut out),
        other => printer.group(other, 0, &mut out),
    }
    out.push('\n');
    out
}

struct Printer<'a> {
    prefixes: &'a [(String, String)],
}

fn valid_local(local: &str) -> bool {
    !local.ends_with('.')
        && !local.starts_with('.')
        && local
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | ':' | '%' | '.'))
}

impl Printer<'_> {
    fn term(&self, t: &TermPattern) -> String {
        match t {
            TermPattern::Var(v) => v.to_string(),
            TermPattern::Term(Term::Iri(iri)) => {
                for (prefix, ns) in self.prefixes {
                    if let Some(local) = iri.strip_prefix(ns.as_str()) {
                        if valid_local(local) {
                            return format!("{prefix}:{local}");
                        }
                    }
                }
                format!("<{iri}>")
            }
            TermPattern::Term(term) => term.to_string(),
        }
    }

    fn triple(&self, t: &TriplePattern) -> String {
        format!(
            "{} {} {} .",
            self.term(&t.s),
            self.term(&t.p),
            self.term(&t.o)
        )
    }

    fn group(&self, inner: &GraphPattern, indent: usize, out: &mut String) {
        out.push_str("{\n");
        self.elements(inner, indent + 1, out);
        out.push_str(&"  ".repeat(indent));
        out.push('}');
    }

    fn line(&self, indent: usize, out: &mut String) {
        out.push_str(&"  ".repeat(indent));
    }

    fn elements(&self, p: &GraphPattern, indent: usize, out: &mut String) {
        match p {
            GraphPattern::Bgp(triples) => {
                for t in triples {
                    self.line(indent, out);
                    out.push_str(&self.triple(t));
                    out.push('\n');
                }
            }
            GraphPattern::And(l, r) => {
                self.elements(l, indent, out);
                self.element(r, indent, out);
            }
            GraphPattern::Optional(l, r) => {
                if **l != GraphPattern::Bgp(Vec::new()) {
                    self.elements(l, indent, out);
                }
                self.line(indent, out);
                out.push_str("OPTIONAL ");
                self.braced(r, indent, out);
                out.push('\n');
            }
            GraphPattern::Group(_) | GraphPattern::Union(..) => self.element(p, indent, out),
        }
    }

    /// One group element; anything that is not naturally a single element is
    /// wrapped in braces.
    fn element(&self, p: &GraphPattern, indent: usize, out: &mut String) {
        match p {
            GraphPattern::Bgp(triples) if !triples.is_empty() => self.elements(p, indent, out),
            GraphPattern::Union(..) | GraphPattern::Group(_) => {
                self.line(indent, out);
                self.union_side(p, indent, out);
                out.push('\n');
            }
            other => {
                self.line(indent, out);
                self.group(other, indent, out);
                out.push('\n');
            }
        }
    }

    fn union_side(&self, p: &GraphPattern, indent: usize, out: &mut String) {
        match p {
            GraphPattern::Union(l, r) => {
                self.union_side(l, indent, out);
                out.push_str(" UNION ");
                self.braced(r, indent, out);
            }
            other => self.braced(other, indent, out),
        }
    }

    fn braced(&self, p: &GraphPattern, indent: usize, out: &mut String) {
        match p {
            GraphPattern::Group(inner) => self.group(inner, indent, out),
            other => self.group(other, indent, out),
        }
    }
}
