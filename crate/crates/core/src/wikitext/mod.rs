//! Wikitext pages into [`Listing`] records.
//!
//! Enumerations are runs of lines starting with `*` or `#`; a run ends at a
//! blank line, a heading or a table. Other text between entries does not
//! split the run. Tables are `{| ... |}` blocks; the first row made only of
//! `!` cells becomes the header. Internal links become candidate mentions.

mod dump;
pub mod markup;
mod table;

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::model::{Listing, ListingContext, ListingItem, ListingKind, MIN_ITEMS};

pub use dump::{PageSource, XmlDumpReader};
use markup::{render_inline, segment, strip_block_noise};

static HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(={1,6})\s*(.+?)\s*(={1,6})\s*$").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPage {
    pub title: String,
    pub wikitext: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParserConfig {
    pub min_items: usize,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            min_items: MIN_ITEMS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPage {
    pub listings: Vec<Listing>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_page(page: &RawPage) -> ParsedPage {
    parse_page_with(page, &ParserConfig::default())
}

pub fn parse_page_with(page: &RawPage, cfg: &ParserConfig) -> ParsedPage {
    PageParser::new(page, cfg).run()
}

struct PendingEnum {
    section_path: Vec<String>,
    /// (depth, raw entry text)
    entries: Vec<(usize, String)>,
}

struct PageParser<'a> {
    title: &'a str,
    wikitext: &'a str,
    cfg: &'a ParserConfig,
    sections: Vec<(usize, String)>,
    pending: Option<PendingEnum>,
    out: ParsedPage,
}

impl<'a> PageParser<'a> {
    fn new(page: &'a RawPage, cfg: &'a ParserConfig) -> Self {
        PageParser {
            title: &page.title,
            wikitext: &page.wikitext,
            cfg,
            sections: Vec::new(),
            pending: None,
            out: ParsedPage::default(),
        }
    }

    fn run(mut self) -> ParsedPage {
        let page_text = strip_block_noise(self.wikitext);
        let lines: Vec<&str> = page_text.lines().collect();
        let mut i = 0;
        while i < lines.len() {
            let line = lines[i];
            let trimmed = line.trim_start();

            if let Some(caps) = HEADING.captures(line.trim_end()) {
                self.flush_enum();
                let level = caps[1].len().min(caps[3].len());
                let title = inline_text(&caps[2]);
                while self.sections.last().is_some_and(|(l, _)| *l >= level) {
                    self.sections.pop();
                }
                self.sections.push((level, title));
                i += 1;
                continue;
            }

            if trimmed.starts_with("{|") {
                self.flush_enum();
                match table_close(&lines, i) {
                    Some(close) => {
                        self.emit_table(&lines[i + 1..close]);
                        i = close + 1;
                    }
                    None => {
                        self.out.diagnostics.push(Diagnostic::new(
                            self.title,
                            format!("line {}: unclosed table skipped", i + 1),
                        ));
                        i += 1;
                    }
                }
                continue;
            }

            if line.starts_with(['*', '#']) {
                let depth = line.bytes().take_while(|b| matches!(b, b'*' | b'#')).count();
                let rest = &line[depth..];
                let section_path = self.section_path();
                let pending = self.pending.get_or_insert_with(|| PendingEnum {
                    section_path,
                    entries: Vec::new(),
                });
                match (rest.strip_prefix(':'), pending.entries.last_mut()) {
                    // `*:` continues the previous entry.
                    (Some(cont), Some((_, text))) => {
                        text.push(' ');
                        text.push_str(cont.trim_start_matches(':'));
                    }
                    _ => pending.entries.push((depth, rest.trim_start_matches(':').to_owned())),
                }
            } else if line.trim().is_empty() {
                self.flush_enum();
            }
            i += 1;
        }
        self.flush_enum();
        self.out
    }

    fn section_path(&self) -> Vec<String> {
        self.sections.iter().map(|(_, t)| t.clone()).collect()
    }

    fn next_id(&self) -> String {
        format!("{}#{}", self.title, self.out.listings.len())
    }

    fn flush_enum(&mut self) {
        let Some(pending) = self.pending.take() else { return };
        let items: Vec<ListingItem> = pending
            .entries
            .iter()
            .filter_map(|(depth, raw)| {
                let (text, mentions) = segment(&render_inline(raw), 0);
                (!text.is_empty()).then(|| ListingItem {
                    cells: vec![text],
                    depth: *depth,
                    mentions,
                })
            })
            .collect();
        if items.len() < self.cfg.min_items {
            return;
        }
        let listing = Listing {
            id: self.next_id(),
            kind: ListingKind::Enum,
            context: ListingContext {
                page_title: self.title.to_owned(),
                section_path: pending.section_path,
                header_cells: None,
            },
            items,
        };
        self.out.listings.push(listing);
    }

    fn emit_table(&mut self, body: &[&str]) {
        let grid = table::parse_grid(body);
        if grid.is_empty() {
            self.out.diagnostics.push(Diagnostic::new(self.title, "table without rows skipped"));
            return;
        }
        let header_row = grid.iter().position(|row| row.iter().all(|c| c.header));
        let header: Option<Vec<String>> =
            header_row.map(|r| grid[r].iter().map(|c| inline_text(&cell_source(&c.content))).collect());

        let mut rows: Vec<ListingItem> = grid
            .iter()
            .enumerate()
            .filter(|(r, _)| Some(*r) != header_row)
            .map(|(_, row)| {
                let mut cells = Vec::with_capacity(row.len());
                let mut mentions = Vec::new();
                for (ci, cell) in row.iter().enumerate() {
                    let (text, ms) = segment(&render_inline(&cell_source(&cell.content)), ci);
                    cells.push(text);
                    mentions.extend(ms);
                }
                ListingItem {
                    cells,
                    depth: 1,
                    mentions,
                }
            })
            .filter(|it| it.cells.iter().any(|c| !c.is_empty()))
            .collect();

        if rows.len() < self.cfg.min_items {
            return;
        }

        let width = rows
            .iter()
            .map(|r| r.cells.len())
            .chain(header.as_ref().map(Vec::len))
            .max()
            .unwrap_or(0);
        let mut padded = false;
        for r in &mut rows {
            if r.cells.len() < width {
                padded = true;
                r.cells.resize(width, String::new());
            }
        }
        let header = header.map(|mut h| {
            if h.len() < width {
                padded = true;
                h.resize(width, String::new());
            }
            h
        });
        if padded {
            self.out.diagnostics.push(Diagnostic::new(
                self.next_id(),
                format!("ragged table padded to {width} columns"),
            ));
        }

        let listing = Listing {
            id: self.next_id(),
            kind: ListingKind::Table,
            context: ListingContext {
                page_title: self.title.to_owned(),
                section_path: self.section_path(),
                header_cells: header,
            },
            items: rows,
        };
        self.out.listings.push(listing);
    }
}

/// Multi-line cell content with list markers at line starts removed.
fn cell_source(content: &str) -> String {
    content
        .lines()
        .map(|l| l.trim_start().trim_start_matches(['*', '#', ':', ';']))
        .collect::<Vec<_>>()
        .join("\n")
}

fn inline_text(src: &str) -> String {
    segment(&render_inline(src), 0).0
}

fn table_close(lines: &[&str], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, line) in lines.iter().enumerate().skip(open) {
        let t = line.trim_start();
        if t.starts_with("{|") {
            depth += 1;
        } else if t.starts_with("|}") {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

/// Listing counts and item-count summaries per listing kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pages: usize,
    pub enums: usize,
    pub tables: usize,
    pub enum_items_avg: f64,
    pub table_items_avg: f64,
    pub enum_items_median: f64,
    pub table_items_median: f64,
}

pub fn corpus_stats<'a>(listings: impl IntoIterator<Item = &'a Listing>) -> CorpusStats {
    let mut pages = BTreeSet::new();
    let mut enum_sizes = Vec::new();
    let mut table_sizes = Vec::new();
    for l in listings {
        pages.insert(l.context.page_title.as_str());
        match l.kind {
            ListingKind::Enum => enum_sizes.push(l.items.len()),
            ListingKind::Table => table_sizes.push(l.items.len()),
        }
    }
    CorpusStats {
        pages: pages.len(),
        enums: enum_sizes.len(),
        tables: table_sizes.len(),
        enum_items_avg: mean(&enum_sizes),
        table_items_avg: mean(&table_sizes),
        enum_items_median: median(&mut enum_sizes),
        table_items_median: median(&mut table_sizes),
    }
}

fn mean(xs: &[usize]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<usize>() as f64 / xs.len() as f64
}

fn median(xs: &mut [usize]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2] as f64
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_listing_with;

    fn page(title: &str, text: &str) -> RawPage {
        RawPage {
            title: title.into(),
            wikitext: text.into(),
        }
    }

    const GILBY: &str = "'''Gilby Clarke''' is a musician.
== Discography ==
=== Albums with Guns N' Roses ===
* ''[[The Spaghetti Incident?]]'' (1993)
* ''[[Greatest Hits (Guns N' Roses album)|Greatest Hits]]'' (1999)
* ''X'' (2000)
=== Solo albums ===
{| class=\"wikitable\"
! Name !! Year
|-
| ''[[Rubber (album)|Rubber]]'' || 1998
|-
| ''[[Swag (album)|Swag]]'' || 2001
|-
| ''[[99 Live]]'' || 1999
|}
";

    #[test]
    fn enumeration_with_section_path() {
        let out = parse_page(&page("Gilby Clarke", GILBY));
        let l = &out.listings[0];
        assert_eq!(l.kind, ListingKind::Enum);
        assert_eq!(l.items.len(), 3);
        assert_eq!(
            l.context.section_path,
            vec!["Discography".to_string(), "Albums with Guns N' Roses".to_string()]
        );
        assert_eq!(l.items[0].cells, vec!["The Spaghetti Incident? (1993)"]);
        assert_eq!(l.items[2].mentions.len(), 0);
    }

    #[test]
    fn table_with_header_and_links() {
        let out = parse_page(&page("Gilby Clarke", GILBY));
        let t = &out.listings[1];
        assert_eq!(t.id, "Gilby Clarke#1");
        assert_eq!(t.kind, ListingKind::Table);
        assert_eq!(t.context.section_path, vec!["Discography", "Solo albums"]);
        assert_eq!(t.context.header_cells.as_deref(), Some(&["Name".to_string(), "Year".to_string()][..]));
        assert_eq!(t.items[0].cells, vec!["Rubber", "1998"]);
        let m = &t.items[0].mentions[0];
        assert_eq!(m.entity_id.as_deref(), Some("Rubber (album)"));
        assert_eq!((m.cell_index, m.start_word, m.end_word), (0, 0, 1));
        assert!(!m.is_subject && m.label.is_none());
    }

    #[test]
    fn small_listings_are_dropped() {
        let text = "{|\n| a\n|-\n| b\n|}\n* x\n* y\n";
        assert!(parse_page(&page("P", text)).listings.is_empty());
        let cfg = ParserConfig { min_items: 2 };
        assert_eq!(parse_page_with(&page("P", text), &cfg).listings.len(), 2);
    }

    #[test]
    fn blank_lines_split_but_prose_does_not() {
        let text = "* a\n* b\nsome prose\n* c\n\n* d\n* e\n* f\n";
        let out = parse_page(&page("P", text));
        assert_eq!(out.listings.len(), 2);
        assert_eq!(out.listings[0].items.len(), 3);
        assert_eq!(out.listings[1].items.len(), 3);
    }

    #[test]
    fn depth_counts_markers() {
        let text = "* a\n** b\n*#* c\n*: more of c\n";
        let out = parse_page(&page("P", text));
        let depths: Vec<usize> = out.listings[0].items.iter().map(|i| i.depth).collect();
        assert_eq!(depths, vec![1, 2, 3]);
        assert_eq!(out.listings[0].items[2].cells[0], "c more of c");
    }

    #[test]
    fn unclosed_table_emits_diagnostic() {
        let text = "{| class=x\n| a\n|-\n| b\n|-\n| c\n* e1\n* e2\n* e3\n";
        let out = parse_page(&page("P", text));
        assert_eq!(out.diagnostics.len(), 1);
        assert!(out.diagnostics[0].message.contains("unclosed table"));
        assert_eq!(out.listings.len(), 1);
        assert_eq!(out.listings[0].kind, ListingKind::Enum);
    }

    #[test]
    fn listings_inside_templates_are_excluded() {
        let text = "{{Navbox|list=\n* a\n* b\n* c\n}}\n";
        assert!(parse_page(&page("P", text)).listings.is_empty());
    }

    #[test]
    fn ragged_tables_are_padded_and_valid() {
        let text = "{|\n! A !! B !! C\n|-\n| 1 || 2\n|-\n| 3 || 4 || 5\n|-\n| rowspan=2 | 6 || 7 || 8\n|-\n| 9 || 10\n|}\n";
        let out = parse_page(&page("P", text));
        let t = &out.listings[0];
        assert!(validate_listing_with(t, 3).is_empty(), "{:?}", validate_listing_with(t, 3));
        assert_eq!(t.items[0].cells, vec!["1", "2", ""]);
        assert_eq!(t.items[3].cells, vec!["6", "9", "10"]);
    }

    #[test]
    fn stats_for_three_enums() {
        let mk = |n: usize, id: &str| Listing {
            id: id.into(),
            kind: ListingKind::Enum,
            context: ListingContext {
                page_title: "P".into(),
                section_path: vec![],
                header_cells: None,
            },
            items: (0..n)
                .map(|i| ListingItem {
                    cells: vec![format!("w{i}")],
                    depth: 1,
                    mentions: vec![],
                })
                .collect(),
        };
        let ls = [mk(3, "a"), mk(4, "b"), mk(10, "c")];
        let s = corpus_stats(&ls);
        assert_eq!((s.pages, s.enums, s.tables), (1, 3, 0));
        assert!((s.enum_items_avg - 17.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.enum_items_median, 4.0);
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
    }
}
