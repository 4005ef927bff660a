use serde::{Deserialize, Serialize};

/// Index lists of the words two sentences have in common, in order.
///
/// `shared_indices_a[k]` and `shared_indices_b[k]` point at equal tokens of
/// the token lists produced by [`word_tokens`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub shared_indices_a: Vec<usize>,
    pub shared_indices_b: Vec<usize>,
}

impl WordAlignment {
    pub fn len(&self) -> usize {
        self.shared_indices_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared_indices_a.is_empty()
    }

    pub fn mirrored(&self) -> WordAlignment {
        WordAlignment {
            shared_indices_a: self.shared_indices_b.clone(),
            shared_indices_b: self.shared_indices_a.clone(),
        }
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{201E}'
                | '\u{2026}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{00AB}'
                | '\u{00BB}'
                | '\u{00A1}'
                | '\u{00BF}'
        )
}

/// Split on whitespace, then peel leading and trailing punctuation off each
/// chunk as one-character tokens. Inner punctuation (`don't`) stays put.
pub fn word_tokens(sentence: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for chunk in sentence.split_whitespace() {
        let mut rest = chunk;
        while let Some(c) = rest.chars().next().filter(|c| is_punct(*c)) {
            tokens.push(&rest[..c.len_utf8()]);
            rest = &rest[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().next_back().filter(|c| is_punct(*c)) {
            let cut = rest.len() - c.len_utf8();
            trailing.push(&rest[cut..]);
            rest = &rest[..cut];
        }
        if !rest.is_empty() {
            tokens.push(rest);
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

/// Longest common subsequence of the two sentences' word tokens.
///
/// Among alignments of maximal length the one whose index list into `sent_a`
/// is lexicographically smallest wins; ties on that are broken by the
/// smallest index into `sent_b`.
pub fn align_shared_words(sent_a: &str, sent_b: &str) -> WordAlignment {
    align_tokens(&word_tokens(sent_a), &word_tokens(sent_b))
}

pub(crate) fn align_tokens(a: &[&str], b: &[&str]) -> WordAlignment {
    let (n, m) = (a.len(), b.len());
    // suffix[i][j] = LCS length of a[i..] and b[j..]
    let mut suffix = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i][j] = if a[i] == b[j] {
                suffix[i + 1][j + 1] + 1
            } else {
                suffix[i + 1][j].max(suffix[i][j + 1])
            };
        }
    }

    let mut out = WordAlignment::default();
    let (mut i, mut j) = (0, 0);
    while suffix[i][j] > 0 {
        let need = suffix[i][j];
        // Earliest position in `a` that can still start an optimal tail.
        let (ni, nj) = (i..n)
            .find_map(|ii| {
                let jj = (j..m).find(|&jj| b[jj] == a[ii])?;
                (suffix[ii + 1][jj + 1] + 1 == need).then_some((ii, jj))
            })
            .expect("an optimal continuation exists while the suffix LCS is positive");
        out.shared_indices_a.push(ni);
        out.shared_indices_b.push(nj);
        i = ni + 1;
        j = nj + 1;
    }
    out
}
