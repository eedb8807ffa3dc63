use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use quick_xml::events::Event;
use quick_xml::Reader;

use super::RawPage;
use crate::error::{Error, Result};

/// Streams article pages (namespace 0, redirects skipped) out of a
/// MediaWiki XML export.
pub struct XmlDumpReader<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    done: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Ns,
    Text,
    Other,
}

impl<R: BufRead> XmlDumpReader<R> {
    pub fn new(inner: R) -> Self {
        XmlDumpReader {
            reader: Reader::from_reader(inner),
            buf: Vec::new(),
            done: false,
        }
    }

    fn next_page(&mut self) -> Result<Option<RawPage>> {
        let mut in_page = false;
        let mut field = Field::Other;
        let mut title = String::new();
        let mut ns = String::new();
        let mut text = String::new();
        loop {
            self.buf.clear();
            let event = self
                .reader
                .read_event_into(&mut self.buf)
                .map_err(|e| Error::Xml(format!("at byte {}: {e}", self.reader.buffer_position())))?;
            match event {
                Event::Start(e) => match e.local_name().as_ref() {
                    b"page" => {
                        in_page = true;
                        title.clear();
                        ns.clear();
                        text.clear();
                    }
                    b"title" if in_page => field = Field::Title,
                    b"ns" if in_page => field = Field::Ns,
                    b"text" if in_page => field = Field::Text,
                    _ => field = Field::Other,
                },
                Event::Text(t) => {
                    let s = t.unescape().map_err(|e| Error::Xml(e.to_string()))?;
                    push_field(field, &s, &mut title, &mut ns, &mut text);
                }
                Event::CData(t) => {
                    let s = String::from_utf8_lossy(&t);
                    push_field(field, &s, &mut title, &mut ns, &mut text);
                }
                Event::End(e) => {
                    field = Field::Other;
                    if e.local_name().as_ref() == b"page" && in_page {
                        in_page = false;
                        let ns_ok = matches!(ns.trim(), "" | "0");
                        let redirect = text.trim_start().to_ascii_uppercase().starts_with("#REDIRECT");
                        if ns_ok && !redirect {
                            return Ok(Some(RawPage {
                                title: std::mem::take(&mut title),
                                wikitext: std::mem::take(&mut text),
                            }));
                        }
                    }
                }
                Event::Eof => return Ok(None),
                _ => {}
            }
        }
    }
}

fn push_field(field: Field, s: &str, title: &mut String, ns: &mut String, text: &mut String) {
    match field {
        Field::Title => title.push_str(s),
        Field::Ns => ns.push_str(s),
        Field::Text => text.push_str(s),
        Field::Other => {}
    }
}

impl<R: BufRead> Iterator for XmlDumpReader<R> {
    type Item = Result<RawPage>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_page() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Where raw pages come from: an XML dump, a directory with one page per
/// file (title taken from the file stem, `_` read as space), or a
/// line-delimited file of `{"title", "wikitext"}` records.
pub enum PageSource {
    Xml(XmlDumpReader<BufReader<File>>),
    Files(std::vec::IntoIter<PathBuf>),
    Records(std::vec::IntoIter<RawPage>),
}

impl PageSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            return Ok(PageSource::Files(files.into_iter()));
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => {
                Ok(PageSource::Records(crate::jsonl::read::<RawPage>(path)?.into_iter()))
            }
            _ => {
                let f = File::open(path).map_err(|e| Error::io(path, e))?;
                Ok(PageSource::Xml(XmlDumpReader::new(BufReader::new(f))))
            }
        }
    }
}

impl Iterator for PageSource {
    type Item = Result<RawPage>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            PageSource::Xml(r) => r.next(),
            PageSource::Records(it) => it.next().map(Ok),
            PageSource::Files(it) => {
                let path = it.next()?;
                let title = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().replace('_', " "))
                    .unwrap_or_default();
                Some(
                    std::fs::read_to_string(&path)
                        .map(|wikitext| RawPage { title, wikitext })
                        .map_err(|e| Error::io(&path, e)),
                )
            }
        }
    }
}
