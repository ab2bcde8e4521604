//! Sectioned key-value text with embedded CSV blocks.
//!
//! ```text
//! [section]
//! key = value
//! begin block_name
//! a,b
//! 1,2
//! end
//! ```
//!
//! `#` starts a comment line. Line numbers are kept for error messages.

use super::{IoError, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub name: String,
    pub line: usize,
    pub header: Vec<String>,
    /// (line number, fields)
    pub rows: Vec<(usize, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
    pub blocks: Vec<Block>,
    used: Vec<bool>,
    used_blocks: Vec<bool>,
}

impl Section {
    fn new(name: String, line: usize) -> Self {
        Self {
            name,
            line,
            entries: Vec::new(),
            blocks: Vec::new(),
            used: Vec::new(),
            used_blocks: Vec::new(),
        }
    }

    pub fn raw(&mut self, key: &str) -> Result<(String, usize)> {
        match self.entries.iter().position(|e| e.key == key) {
            Some(i) => {
                self.used[i] = true;
                Ok((self.entries[i].value.clone(), self.entries[i].line))
            }
            None => Err(IoError::parse(
                self.line,
                format!("section [{}] is missing key `{key}`", self.name),
            )),
        }
    }

    pub fn f64(&mut self, key: &str) -> Result<f64> {
        let (v, line) = self.raw(key)?;
        parse_f64(&v, line, key)
    }

    pub fn usize(&mut self, key: &str) -> Result<usize> {
        let (v, line) = self.raw(key)?;
        v.parse()
            .map_err(|_| IoError::parse(line, format!("`{key}` expects an integer, got `{v}`")))
    }

    pub fn u64(&mut self, key: &str) -> Result<u64> {
        let (v, line) = self.raw(key)?;
        v.parse()
            .map_err(|_| IoError::parse(line, format!("`{key}` expects an integer, got `{v}`")))
    }

    pub fn block(&mut self, name: &str, header: &[&str]) -> Result<Block> {
        let Some(i) = self.blocks.iter().position(|b| b.name == name) else {
            return Err(IoError::parse(
                self.line,
                format!("section [{}] is missing block `{name}`", self.name),
            ));
        };
        self.used_blocks[i] = true;
        let b = self.blocks[i].clone();
        if b.header
            .iter()
            .map(String::as_str)
            .ne(header.iter().copied())
        {
            return Err(IoError::parse(
                b.line + 1,
                format!("block `{name}` expects columns {}", header.join(",")),
            ));
        }
        for (line, row) in &b.rows {
            if row.len() != header.len() {
                return Err(IoError::parse(
                    *line,
                    format!("expected {} fields, found {}", header.len(), row.len()),
                ));
            }
        }
        Ok(b)
    }

    /// Fails on the first key or block outside the given lists.
    pub fn allow(&self, keys: &[&str], blocks: &[&str]) -> Result<()> {
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| !keys.contains(&e.key.as_str()))
        {
            return Err(IoError::parse(
                e.line,
                format!("unknown key `{}` in section [{}]", e.key, self.name),
            ));
        }
        if let Some(b) = self
            .blocks
            .iter()
            .find(|b| !blocks.contains(&b.name.as_str()))
        {
            return Err(IoError::parse(
                b.line,
                format!("unknown block `{}` in section [{}]", b.name, self.name),
            ));
        }
        Ok(())
    }

    /// Fails on any key or block that was never read.
    pub fn finish(&self) -> Result<()> {
        if let Some(i) = self.used.iter().position(|u| !u) {
            let e = &self.entries[i];
            return Err(IoError::parse(
                e.line,
                format!("unknown key `{}` in section [{}]", e.key, self.name),
            ));
        }
        if let Some(i) = self.used_blocks.iter().position(|u| !u) {
            let b = &self.blocks[i];
            return Err(IoError::parse(
                b.line,
                format!("unknown block `{}` in section [{}]", b.name, self.name),
            ));
        }
        Ok(())
    }
}

pub(crate) fn parse_f64(v: &str, line: usize, what: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| IoError::parse(line, format!("`{what}` expects a number, got `{v}`")))
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        while let Some((n, line)) = lines.next() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if sections.iter().any(|s| s.name == name) {
                    return Err(IoError::parse(n, format!("duplicate section [{name}]")));
                }
                sections.push(Section::new(name, n));
                continue;
            }
            let Some(section) = sections.last_mut() else {
                return Err(IoError::parse(n, "content before the first [section]"));
            };
            if let Some(name) = line.strip_prefix("begin ") {
                let name = name.trim().to_string();
                if section.blocks.iter().any(|b| b.name == name) {
                    return Err(IoError::parse(n, format!("duplicate block `{name}`")));
                }
                let mut header = None;
                let mut rows = Vec::new();
                let mut closed = false;
                for (m, l) in lines.by_ref() {
                    if l.is_empty() || l.starts_with('#') {
                        continue;
                    }
                    if l == "end" {
                        closed = true;
                        break;
                    }
                    let fields: Vec<String> = l.split(',').map(|f| f.trim().to_string()).collect();
                    if header.is_none() {
                        header = Some(fields);
                    } else {
                        rows.push((m, fields));
                    }
                }
                if !closed {
                    return Err(IoError::parse(n, format!("block `{name}` has no `end`")));
                }
                section.blocks.push(Block {
                    name,
                    line: n,
                    header: header.unwrap_or_default(),
                    rows,
                });
                section.used_blocks.push(false);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(IoError::parse(
                    n,
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim().to_string();
            if section.entries.iter().any(|e| e.key == key) {
                return Err(IoError::parse(n, format!("duplicate key `{key}`")));
            }
            section.entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line: n,
            });
            section.used.push(false);
        }
        Ok(Self { sections })
    }

    pub fn take(&mut self, name: &str) -> Result<Section> {
        match self.sections.iter().position(|s| s.name == name) {
            Some(i) => Ok(self.sections.remove(i)),
            None => Err(IoError::parse(0, format!("missing section [{name}]"))),
        }
    }

    /// Fails on a section nobody asked for.
    pub fn finish(&self) -> Result<()> {
        match self.sections.first() {
            Some(s) => Err(IoError::parse(
                s.line,
                format!("unknown section [{}]", s.name),
            )),
            None => Ok(()),
        }
    }
}

/// Builds documents in the same syntax.
#[derive(Debug, Default)]
pub(crate) struct Writer {
    out: String,
}

impl Writer {
    pub fn comment(&mut self, text: &str) {
        self.out.push_str("# ");
        self.out.push_str(text);
        self.out.push('\n');
    }

    pub fn section(&mut self, name: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push_str(&format!("[{name}]\n"));
    }

    pub fn entry(&mut self, key: &str, value: impl std::fmt::Display) {
        self.out.push_str(&format!("{key} = {value}\n"));
    }

    pub fn block<R, I>(&mut self, name: &str, header: &[&str], rows: R)
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = f64>,
    {
        self.out
            .push_str(&format!("begin {name}\n{}\n", header.join(",")));
        for row in rows {
            let fields: Vec<String> = row.into_iter().map(|v| v.to_string()).collect();
            self.out.push_str(&fields.join(","));
            self.out.push('\n');
        }
        self.out.push_str("end\n");
    }

    pub fn finish(self) -> String {
        self.out
    }
}
