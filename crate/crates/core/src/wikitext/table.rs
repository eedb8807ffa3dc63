//! `{| ... |}` table markup into a rectangular grid of raw cell contents.

use std::sync::LazyLock;

use regex::Regex;

static SPAN_ATTR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\b(rowspan|colspan)\s*=\s*["']?\s*(\d+)"#).unwrap());

/// Spans above this are treated as markup noise and clamped.
const MAX_SPAN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCell {
    pub header: bool,
    pub content: String,
}

#[derive(Debug, Clone)]
struct RawCell {
    header: bool,
    content: String,
    rowspan: usize,
    colspan: usize,
}

/// Parses the lines strictly between the opening `{|` and closing `|}`.
/// Nested tables are skipped. Returns one vector of cells per row after
/// rowspan/colspan expansion; rows are not yet padded to equal width.
pub fn parse_grid(lines: &[&str]) -> Vec<Vec<GridCell>> {
    let mut rows: Vec<Vec<RawCell>> = vec![Vec::new()];
    let mut nested = 0usize;
    let mut in_caption = false;

    for raw in lines {
        let line = raw.trim_start();
        if line.starts_with("{|") {
            nested += 1;
            continue;
        }
        if nested > 0 {
            if line.starts_with("|}") {
                nested -= 1;
            }
            continue;
        }
        if line.starts_with("|+") {
            in_caption = true;
        } else if line.starts_with("|-") {
            in_caption = false;
            rows.push(Vec::new());
        } else if let Some(rest) = line.strip_prefix('!') {
            in_caption = false;
            let row = rows.last_mut().expect("at least one row");
            for part in split_outside_links(rest, &["!!", "||"]) {
                row.push(raw_cell(part, true));
            }
        } else if let Some(rest) = line.strip_prefix('|') {
            in_caption = false;
            let row = rows.last_mut().expect("at least one row");
            for part in split_outside_links(rest, &["||"]) {
                row.push(raw_cell(part, false));
            }
        } else if !in_caption {
            if let Some(cell) = rows.last_mut().and_then(|r| r.last_mut()) {
                cell.content.push('\n');
                cell.content.push_str(line);
            }
        }
    }

    rows.retain(|r| !r.is_empty());
    expand_spans(rows)
}

fn raw_cell(part: &str, header: bool) -> RawCell {
    let (attrs, content) = match split_outside_links(part, &["|"]).as_slice() {
        [attrs, _, ..] => (Some(*attrs), part[attrs.len() + 1..].to_owned()),
        _ => (None, part.to_owned()),
    };
    let mut rowspan = 1;
    let mut colspan = 1;
    if let Some(attrs) = attrs {
        for cap in SPAN_ATTR.captures_iter(attrs) {
            let n: usize = cap[2].parse().unwrap_or(1).clamp(1, MAX_SPAN);
            if cap[1].eq_ignore_ascii_case("rowspan") {
                rowspan = n;
            } else {
                colspan = n;
            }
        }
    }
    RawCell {
        header,
        content,
        rowspan,
        colspan,
    }
}

/// Splits on any of `seps`, ignoring separators inside `[[...]]`.
fn split_outside_links<'a>(s: &'a str, seps: &[&str]) -> Vec<&'a str> {
    let b = s.as_bytes();
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut last = 0;
    let mut i = 0;
    'outer: while i < b.len() {
        if b[i..].starts_with(b"[[") {
            depth += 1;
            i += 2;
            continue;
        }
        if b[i..].starts_with(b"]]") {
            depth = depth.saturating_sub(1);
            i += 2;
            continue;
        }
        if depth == 0 {
            for sep in seps {
                if b[i..].starts_with(sep.as_bytes()) {
                    parts.push(&s[last..i]);
                    i += sep.len();
                    last = i;
                    continue 'outer;
                }
            }
        }
        i += 1;
    }
    parts.push(&s[last..]);
    parts
}

fn expand_spans(rows: Vec<Vec<RawCell>>) -> Vec<Vec<GridCell>> {
    // Per column: remaining rows to fill and the cell to fill them with.
    let mut carry: Vec<Option<(usize, GridCell)>> = Vec::new();
    let mut grid = Vec::with_capacity(rows.len());

    for row in rows {
        let mut out: Vec<GridCell> = Vec::new();
        let mut col = 0;
        let mut cells = row.into_iter();
        loop {
            while let Some(slot) = carry.get_mut(col) {
                let Some((remaining, cell)) = slot.take() else { break };
                out.push(cell.clone());
                if remaining > 1 {
                    *slot = Some((remaining - 1, cell));
                }
                col += 1;
            }
            let Some(cell) = cells.next() else { break };
            let gc = GridCell {
                header: cell.header,
                content: cell.content,
            };
            for _ in 0..cell.colspan {
                out.push(gc.clone());
                if cell.rowspan > 1 {
                    if carry.len() <= col {
                        carry.resize(col + 1, None);
                    }
                    carry[col] = Some((cell.rowspan - 1, gc.clone()));
                }
                col += 1;
            }
        }
        // Cells carried into columns beyond the explicit ones.
        while col < carry.len() {
            match carry[col].take() {
                Some((remaining, cell)) => {
                    out.push(cell.clone());
                    if remaining > 1 {
                        carry[col] = Some((remaining - 1, cell));
                    }
                }
                None if carry[col + 1..].iter().any(Option::is_some) => out.push(GridCell {
                    header: false,
                    content: String::new(),
                }),
                None => break,
            }
            col += 1;
        }
        grid.push(out);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contents(grid: &[Vec<GridCell>]) -> Vec<Vec<String>> {
        grid.iter()
            .map(|r| r.iter().map(|c| c.content.trim().to_owned()).collect())
            .collect()
    }

    #[test]
    fn header_and_data_rows() {
        let lines = [
            "class=\"wikitable\"",
            "! Name !! Year",
            "|-",
            "| ''[[Rubber (album)|Rubber]]'' || 1998",
            "|-",
            "| Swag",
            "| 2001",
        ];
        let g = parse_grid(&lines[1..]);
        assert_eq!(
            contents(&g),
            vec![vec!["Name", "Year"], vec!["''[[Rubber (album)|Rubber]]''", "1998"], vec!["Swag", "2001"]]
        );
        assert!(g[0].iter().all(|c| c.header));
        assert!(!g[1][0].header);
    }

    #[test]
    fn attributes_are_stripped() {
        let g = parse_grid(&["| style=\"x\" | a || b", "|-", "| c || align=left | [[x|y]]"]);
        assert_eq!(contents(&g), vec![vec!["a", "b"], vec!["c", "[[x|y]]"]]);
    }

    #[test]
    fn rowspan_and_colspan_duplicate_cells() {
        let lines = [
            "| rowspan=\"2\" | A || B",
            "|-",
            "| C",
            "|-",
            "| colspan=2 | D",
        ];
        let g = parse_grid(&lines);
        assert_eq!(
            contents(&g),
            vec![vec!["A", "B"], vec!["A", "C"], vec!["D", "D"]]
        );
    }

    #[test]
    fn nested_tables_and_captions_are_skipped() {
        let lines = [
            "|+ Caption text",
            "| a",
            "{| class=inner",
            "| inner",
            "|}",
            "continued",
            "|-",
            "| b",
        ];
        let g = parse_grid(&lines);
        assert_eq!(contents(&g), vec![vec!["a\ncontinued"], vec!["b"]]);
    }
}
