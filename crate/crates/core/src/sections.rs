//! Line-oriented sectioned text used by every model and scenario file.
//!
//! A file is a sequence of `[section]` headers, each followed by content
//! lines. `#` starts a comment that runs to end of line. Blank lines are
//! ignored. Line numbers are kept so that parse errors can point at the
//! offending line.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Source location of a line: file label plus 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub file: String,
    pub line: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{location}: {message}")]
pub struct ParseError {
    pub location: Location,
    pub message: String,
}

impl ParseError {
    pub fn new(location: Location, message: impl Into<String>) -> Self {
        Self {
            location,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Line {
    pub number: usize,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub header_line: usize,
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone)]
pub struct SectionedText {
    pub file: String,
    pub sections: Vec<Section>,
}

impl SectionedText {
    pub fn parse(file: &str, text: &str) -> Result<Self, ParseError> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let number = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if content.starts_with('[') {
                if !content.ends_with(']') || content.len() < 3 {
                    return Err(ParseError::new(
                        Location {
                            file: file.to_string(),
                            line: number,
                        },
                        format!("malformed section header `{content}`"),
                    ));
                }
                sections.push(Section {
                    name: content[1..content.len() - 1].trim().to_string(),
                    header_line: number,
                    lines: Vec::new(),
                });
                continue;
            }
            match sections.last_mut() {
                Some(section) => section.lines.push(Line {
                    number,
                    text: content.to_string(),
                }),
                None => {
                    return Err(ParseError::new(
                        Location {
                            file: file.to_string(),
                            line: number,
                        },
                        "content before the first section header",
                    ))
                }
            }
        }
        if sections.is_empty() {
            return Err(ParseError::new(
                Location {
                    file: file.to_string(),
                    line: 1,
                },
                "no sections found",
            ));
        }
        Ok(Self {
            file: file.to_string(),
            sections,
        })
    }

    pub fn loc(&self, line: usize) -> Location {
        Location {
            file: self.file.clone(),
            line,
        }
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> ParseError {
        ParseError::new(self.loc(line), message)
    }

    /// All sections with the given name, in file order.
    pub fn all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// Lines of every section with this name, concatenated.
    pub fn lines_of(&self, name: &str) -> Vec<&Line> {
        self.sections
            .iter()
            .filter(|s| s.name == name)
            .flat_map(|s| s.lines.iter())
            .collect()
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s.name == name)
    }

    /// Parses a `key = value` section into a map, rejecting duplicate keys.
    pub fn key_values(&self, name: &str) -> Result<KeyValues, ParseError> {
        let mut map = BTreeMap::new();
        for line in self.lines_of(name) {
            let Some((key, value)) = line.text.split_once('=') else {
                return Err(self.error(
                    line.number,
                    format!("expected `key = value`, got `{}`", line.text),
                ));
            };
            let key = key.trim().to_string();
            if map
                .insert(key.clone(), (value.trim().to_string(), line.number))
                .is_some()
            {
                return Err(self.error(line.number, format!("duplicate key `{key}`")));
            }
        }
        Ok(KeyValues {
            file: self.file.clone(),
            map,
        })
    }
}

/// `key = value` pairs with remembered line numbers.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    file: String,
    map: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(v, _)| v.as_str())
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map(|(_, l)| *l).unwrap_or(0)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    fn err(&self, key: &str, message: String) -> ParseError {
        ParseError::new(
            Location {
                file: self.file.clone(),
                line: self.line_of(key),
            },
            message,
        )
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, ParseError> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| self.err(key, format!("`{key}` is not a number: `{v}`")))
            })
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, ParseError> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| {
                    self.err(key, format!("`{key}` is not an unsigned integer: `{v}`"))
                })
            })
            .transpose()
    }

    pub fn require_f64(&self, key: &str, section: &str) -> Result<f64, ParseError> {
        self.f64(key)?.ok_or_else(|| {
            ParseError::new(
                Location {
                    file: self.file.clone(),
                    line: 0,
                },
                format!("[{section}] is missing `{key}`"),
            )
        })
    }
}

/// Splits a content line into its leading words and `key=value` attributes.
///
/// `load3 bus_id=bus1 power_draw_w=120` yields words `["load3"]` and the
/// attribute map `{bus_id: bus1, power_draw_w: 120}`.
#[derive(Debug, Clone)]
pub struct Fields {
    pub words: Vec<String>,
    pub attrs: BTreeMap<String, String>,
}

impl Fields {
    pub fn parse(text: &str) -> Self {
        let mut words = Vec::new();
        let mut attrs = BTreeMap::new();
        for token in text.split_whitespace() {
            match token.split_once('=') {
                Some((k, v)) if !k.is_empty() => {
                    attrs.insert(k.to_string(), v.to_string());
                }
                _ => words.push(token.to_string()),
            }
        }
        Self { words, attrs }
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    pub fn attr_f64(&self, key: &str) -> Result<Option<f64>, String> {
        self.attr(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| format!("attribute `{key}` is not a number: `{v}`"))
            })
            .transpose()
    }

    /// `a|b|c` list attribute; empty when absent.
    pub fn attr_list(&self, key: &str) -> Vec<String> {
        self.attr(key)
            .map(|v| {
                v.split('|')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let text = "# header comment\n[a]\nx = 1 # trailing\n\n[b]\nfoo bar=2\n[a]\ny = 3\n";
        let doc = SectionedText::parse("t", text).unwrap();
        assert_eq!(doc.sections.len(), 3);
        let kv = doc.key_values("a").unwrap();
        assert_eq!(kv.f64("x").unwrap(), Some(1.0));
        assert_eq!(kv.f64("y").unwrap(), Some(3.0));
        assert_eq!(kv.line_of("y"), 8);
        let fields = Fields::parse(&doc.lines_of("b")[0].text);
        assert_eq!(fields.words, vec!["foo"]);
        assert_eq!(fields.attr("bar"), Some("2"));
    }

    #[test]
    fn empty_and_orphan_content_rejected() {
        assert!(SectionedText::parse("t", "").is_err());
        assert!(SectionedText::parse("t", "  # only comment\n").is_err());
        let err = SectionedText::parse("t", "x = 1\n[a]\n").unwrap_err();
        assert_eq!(err.location.line, 1);
    }

    #[test]
    fn duplicate_key_reports_line() {
        let doc = SectionedText::parse("f", "[a]\nx=1\nx=2\n").unwrap();
        let err = doc.key_values("a").unwrap_err();
        assert_eq!(err.location.line, 3);
    }
}
