//! Window inputs shared by the word-level taggers.
//!
//! Each labeled position gets a window of ids from its own sentence and a
//! window from the other sentence, centred on the leftmost aligned token.
//!
//! * MT task: window of `w` MT tokens around token `i`, and `w` source
//!   tokens around its alignment.
//! * Gap task: gap `g` sits between MT tokens `g-1` and `g`; its window is
//!   the `w + 1` MT tokens `g-1-k ..= g+k` (`k = (w-1)/2`), so it covers
//!   both neighbours. The aligned window follows token `g-1`; gap 0 gets
//!   start symbols.
//! * Source task: mirror of the MT task with the roles of source and MT
//!   swapped.
//!
//! Positions before the sentence read as the start symbol, positions after
//! it as the stop symbol. Unaligned tokens get a window of unaligned
//! symbols.

use crate::data::{Batch, START, STOP, UNALIGNED};
use crate::tags::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowInputs {
    pub positions: usize,
    /// `positions * main_width` ids from the labeled sentence.
    pub main: Vec<usize>,
    pub main_width: usize,
    /// `positions * aligned_width` ids from the other sentence.
    pub aligned: Vec<usize>,
    pub aligned_width: usize,
}

fn window(seq: &[usize], center: isize, left: isize, right: isize, out: &mut Vec<usize>) {
    for p in center - left..=center + right {
        out.push(if p < 0 {
            START
        } else if p as usize >= seq.len() {
            STOP
        } else {
            seq[p as usize]
        });
    }
}

/// Width of the labeled-sentence window for `task`.
pub fn main_width(task: Stream, window: usize) -> usize {
    match task {
        Stream::Gap => window + 1,
        _ => window,
    }
}

pub fn word_windows(batch: &Batch, row: usize, task: Stream, w: usize) -> WindowInputs {
    let k = ((w - 1) / 2) as isize;
    let src = batch.source.row(row);
    let mt = batch.mt.row(row);
    let mut main = Vec::new();
    let mut aligned = Vec::new();
    let positions = match task {
        Stream::Mt => {
            let links = batch.mt_to_source.row(row);
            for i in 0..mt.len() {
                window(mt, i as isize, k, k, &mut main);
                match links[i] {
                    Some(a) => window(src, a as isize, k, k, &mut aligned),
                    None => aligned.extend(std::iter::repeat_n(UNALIGNED, w)),
                }
            }
            mt.len()
        }
        Stream::Gap => {
            let links = batch.mt_to_source.row(row);
            for gap in 0..=mt.len() {
                window(mt, gap as isize - 1, k, k + 1, &mut main);
                if gap == 0 {
                    aligned.extend(std::iter::repeat_n(START, w));
                } else {
                    match links[gap - 1] {
                        Some(a) => window(src, a as isize, k, k, &mut aligned),
                        None => aligned.extend(std::iter::repeat_n(UNALIGNED, w)),
                    }
                }
            }
            mt.len() + 1
        }
        Stream::Source => {
            let links = batch.source_to_mt.row(row);
            for i in 0..src.len() {
                window(src, i as isize, k, k, &mut main);
                match links[i] {
                    Some(a) => window(mt, a as isize, k, k, &mut aligned),
                    None => aligned.extend(std::iter::repeat_n(UNALIGNED, w)),
                }
            }
            src.len()
        }
    };
    WindowInputs {
        positions,
        main,
        main_width: main_width(task, w),
        aligned,
        aligned_width: w,
    }
}
