//! Minimal block-structured text format shared by the material library and
//! scan configuration files:
//!
//! ```text
//! # comment to end of line
//! block_name {
//!   key value
//!   nested_block { key value ... }
//! }
//! ```
//!
//! Values are single whitespace-delimited tokens; lists are comma-separated
//! inside one token (`bins 1,2,3`).

use std::path::Path;
#[cfg(test)]
use std::path::PathBuf;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum Item {
    Entry {
        key: String,
        value: String,
        line: usize,
    },
    Block(Block),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub items: Vec<Item>,
    pub line: usize,
}

impl Block {
    /// The value of a unique `key value` entry, or an error naming the line.
    pub fn required(&self, path: &Path, key: &str) -> Result<&str> {
        match self.optional(path, key)? {
            Some(v) => Ok(v),
            None => Err(Error::parse(
                path,
                self.line,
                format!("block `{}` is missing required entry `{key}`", self.name),
            )),
        }
    }

    pub fn optional(&self, path: &Path, key: &str) -> Result<Option<&str>> {
        let mut found: Option<&Item> = None;
        for item in &self.items {
            if let Item::Entry { key: k, .. } = item {
                if k == key {
                    if found.is_some() {
                        return Err(Error::parse(
                            path,
                            self.line,
                            format!("block `{}` has duplicate entry `{key}`", self.name),
                        ));
                    }
                    found = Some(item);
                }
            }
        }
        Ok(found.map(|item| match item {
            Item::Entry { value, .. } => value.as_str(),
            Item::Block(_) => unreachable!(),
        }))
    }

    pub fn entry_line(&self, key: &str) -> usize {
        for item in &self.items {
            if let Item::Entry { key: k, line, .. } = item {
                if k == key {
                    return *line;
                }
            }
        }
        self.line
    }

    pub fn sub_blocks<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Block> + 'a {
        self.items.iter().filter_map(move |item| match item {
            Item::Block(b) if b.name == name => Some(b),
            _ => None,
        })
    }

    /// Parses a `f64` entry, reporting the file line on failure.
    pub fn required_f64(&self, path: &Path, key: &str) -> Result<f64> {
        let raw = self.required(path, key)?;
        raw.parse::<f64>().map_err(|_| {
            Error::parse(
                path,
                self.entry_line(key),
                format!("entry `{key}`: expected a number, got `{raw}`"),
            )
        })
    }
}

#[derive(Debug)]
struct Token {
    text: String,
    line: usize,
}

fn tokenize(source: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (ix, raw_line) in source.lines().enumerate() {
        let line = ix + 1;
        let content = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        };
        let mut rest = content;
        while !rest.is_empty() {
            rest = rest.trim_start();
            if rest.is_empty() {
                break;
            }
            if let Some(stripped) = rest.strip_prefix(['{', '}']) {
                tokens.push(Token {
                    text: rest[..1].to_string(),
                    line,
                });
                rest = stripped;
            } else {
                let end = rest
                    .find(|c: char| c.is_whitespace() || c == '{' || c == '}')
                    .unwrap_or(rest.len());
                tokens.push(Token {
                    text: rest[..end].to_string(),
                    line,
                });
                rest = &rest[end..];
            }
        }
    }
    tokens
}

pub fn parse_file(path: &Path) -> Result<Vec<Block>> {
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&source, path)
}

pub fn parse_str(source: &str, path: &Path) -> Result<Vec<Block>> {
    let tokens = tokenize(source);
    let mut pos = 0usize;
    let mut blocks = Vec::new();
    while pos < tokens.len() {
        let (block, next) = parse_block(&tokens, pos, path)?;
        blocks.push(block);
        pos = next;
    }
    Ok(blocks)
}

fn parse_block(tokens: &[Token], pos: usize, path: &Path) -> Result<(Block, usize)> {
    let name = &tokens[pos];
    if name.text == "{" || name.text == "}" {
        return Err(Error::parse(
            path,
            name.line,
            format!("expected a block name, got `{}`", name.text),
        ));
    }
    let open = tokens.get(pos + 1).ok_or_else(|| {
        Error::parse(
            path,
            name.line,
            format!("block `{}` is missing its `{{`", name.text),
        )
    })?;
    if open.text != "{" {
        return Err(Error::parse(
            path,
            open.line,
            format!("expected `{{` after `{}`, got `{}`", name.text, open.text),
        ));
    }
    let mut items = Vec::new();
    let mut cursor = pos + 2;
    loop {
        let tok = tokens.get(cursor).ok_or_else(|| {
            Error::parse(
                path,
                name.line,
                format!("block `{}` is not closed", name.text),
            )
        })?;
        if tok.text == "}" {
            return Ok((
                Block {
                    name: name.text.clone(),
                    items,
                    line: name.line,
                },
                cursor + 1,
            ));
        }
        // Item: either `key value` or a nested block `key { ... }`.
        let next = tokens.get(cursor + 1).ok_or_else(|| {
            Error::parse(path, tok.line, format!("dangling token `{}`", tok.text))
        })?;
        if next.text == "{" {
            let (block, after) = parse_block(tokens, cursor, path)?;
            items.push(Item::Block(block));
            cursor = after;
        } else {
            if next.text == "}" {
                return Err(Error::parse(
                    path,
                    tok.line,
                    format!("entry `{}` is missing its value", tok.text),
                ));
            }
            items.push(Item::Entry {
                key: tok.text.clone(),
                value: next.text.clone(),
                line: tok.line,
            });
            cursor += 2;
        }
    }
}

/// Splits a comma-separated list token (`1,2,3`) and parses each piece.
pub fn parse_list<T: std::str::FromStr>(
    raw: &str,
    path: &Path,
    line: usize,
    what: &str,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for piece in raw.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(Error::parse(path, line, format!("empty {what} list item")));
        }
        out.push(piece.parse::<T>().map_err(|_| {
            Error::parse(path, line, format!("cannot parse {what} item `{piece}`"))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
pub fn unknown_path() -> PathBuf {
    PathBuf::from("<inline>")
}
