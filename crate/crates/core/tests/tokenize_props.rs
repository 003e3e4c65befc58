use std::collections::HashMap;

use morphalign::tokenize::{
    load_tokenizer_files, load_tokenizer_json, TokenizationResult, TokenizerKind, TokenizerSpec, UnknownPolicy,
    WordBeginConvention,
};
use proptest::prelude::*;

/// GPT-2 printable stand-ins for the bytes of `a`, `b`, `c`, `é` and space.
const BYTE_ALPHABET: [&str; 6] = ["a", "b", "c", "Ã", "©", "Ġ"];
const CHAR_ALPHABET: [&str; 5] = ["a", "b", "c", "é", "▁"];

/// Grows a merge list by joining randomly chosen existing symbols.
fn grow_merges(alphabet: &[&str], picks: &[(usize, usize)]) -> (HashMap<String, u32>, Vec<(String, String)>) {
    let mut symbols: Vec<String> = alphabet.iter().map(|s| s.to_string()).collect();
    let mut merges: Vec<(String, String)> = Vec::new();
    for &(i, j) in picks {
        let left = symbols[i % symbols.len()].clone();
        let right = symbols[j % symbols.len()].clone();
        if merges.iter().any(|(l, r)| *l == left && *r == right) {
            continue;
        }
        let joined = format!("{left}{right}");
        if !symbols.contains(&joined) {
            symbols.push(joined);
        }
        merges.push((left, right));
    }
    let vocab = symbols.into_iter().enumerate().map(|(i, s)| (s, i as u32)).collect();
    (vocab, merges)
}

fn assert_covers(result: &TokenizationResult, word: &str) -> Result<(), TestCaseError> {
    let bytes: Vec<u8> = result
        .spans
        .iter()
        .flat_map(|&(s, e)| word.as_bytes()[s..e].iter().copied())
        .collect();
    prop_assert_eq!(bytes.as_slice(), word.as_bytes());
    prop_assert_eq!(result.spans.last().unwrap().1, word.len());
    prop_assert_eq!(result.tokens.len(), result.spans.len());
    Ok(())
}

fn picks() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..64, 0usize..64), 0..40)
}

#[test]
fn books_through_json_definition() {
    let json = r#"{"model": {"type": "BPE",
        "vocab": {"b": 0, "o": 1, "k": 2, "s": 3, "bo": 4, "boo": 5, "ks": 6},
        "merges": ["b o", "bo o", "k s"]}}"#;
    let spec = load_tokenizer_json(json, "toy").unwrap();
    assert_eq!(spec.kind, TokenizerKind::ByteBpe);
    let r = spec.tokenize_word("books", false).unwrap();
    assert_eq!(r.tokens, ["boo", "ks"]);
    assert_eq!(r.spans, [(0, 3), (3, 5)]);
}

#[test]
fn text_files_with_comment_header() {
    let vocab = "{\"a\": 0, \"b\": 1, \"ab\": 2}";
    let merges = "#version: 0.2\na b\n";
    let spec = load_tokenizer_files(vocab, Some(merges), "t").unwrap();
    assert_eq!(spec.tokenize_word("abab", false).unwrap().tokens, ["ab", "ab"]);
}

#[test]
fn two_byte_characters_split_without_merges() {
    let (vocab, merges) = grow_merges(&BYTE_ALPHABET, &[]);
    let spec = TokenizerSpec::byte_bpe("raw", vocab, merges, WordBeginConvention::None).unwrap();
    let r = spec.tokenize_word("éa", false).unwrap();
    assert_eq!(r.spans, [(0, 1), (1, 2), (2, 3)]);
}

proptest! {
    #[test]
    fn byte_bpe_covers_every_word(p in picks(), word in "[abcé]{1,10}", leading in any::<bool>(), gpt2 in any::<bool>()) {
        let (vocab, merges) = grow_merges(&BYTE_ALPHABET, &p);
        let conv = if gpt2 { WordBeginConvention::Gpt2ByteSpace } else { WordBeginConvention::None };
        let spec = TokenizerSpec::byte_bpe("t", vocab, merges, conv).unwrap();
        let r = spec.tokenize_word(&word, leading).unwrap();
        assert_covers(&r, &word)?;
        prop_assert_eq!(r, spec.tokenize_word(&word, leading).unwrap());
    }

    #[test]
    fn sentencepiece_covers_every_word(p in picks(), word in "[abcéz]{1,10}", leading in any::<bool>()) {
        let (mut vocab, merges) = grow_merges(&CHAR_ALPHABET, &p);
        // `z` is outside the alphabet and must fall back to its byte
        let n = vocab.len() as u32;
        vocab.insert("<0x7A>".into(), n);
        let spec = TokenizerSpec::byte_bpe("sp", vocab, merges, WordBeginConvention::SentencepieceUnderscore).unwrap();
        let r = spec.tokenize_word(&word, leading).unwrap();
        assert_covers(&r, &word)?;
    }

    #[test]
    fn appended_merges_never_add_tokens(p in picks(), cut in 0usize..40, word in "[abcé]{1,12}", leading in any::<bool>()) {
        let (vocab, merges) = grow_merges(&BYTE_ALPHABET, &p);
        let cut = cut.min(merges.len());
        let fewer = TokenizerSpec::byte_bpe("a", vocab.clone(), merges[..cut].to_vec(), WordBeginConvention::Gpt2ByteSpace).unwrap();
        let more = TokenizerSpec::byte_bpe("b", vocab, merges, WordBeginConvention::Gpt2ByteSpace).unwrap();
        let n_fewer = fewer.tokenize_word(&word, leading).unwrap().n_tokens();
        let n_more = more.tokenize_word(&word, leading).unwrap().n_tokens();
        prop_assert!(n_more <= n_fewer, "{n_more} > {n_fewer}");
    }

    #[test]
    fn wordpiece_covers_every_word(
        pieces in prop::collection::btree_set("[abcé]{1,3}", 1..10),
        cont in prop::collection::btree_set("[abcé]{1,3}", 0..10),
        word in "[abcé]{1,10}",
    ) {
        let vocab: HashMap<String, u32> = pieces
            .into_iter()
            .chain(cont.into_iter().map(|c| format!("##{c}")))
            .enumerate()
            .map(|(i, t)| (t, i as u32))
            .collect();
        let spec = TokenizerSpec::wordpiece("wp", vocab, "##").unwrap();
        let r = spec.tokenize_word(&word, true).unwrap();
        assert_covers(&r, &word)?;
        // at most one residue token, and only at the end
        let unk: Vec<usize> = r.tokens.iter().enumerate().filter(|(_, t)| *t == "[UNK]").map(|(i, _)| i).collect();
        prop_assert!(unk.is_empty() || unk == vec![r.tokens.len() - 1]);
        let strict = spec.clone().with_unknown_policy(UnknownPolicy::Fail);
        prop_assert_eq!(strict.tokenize_word(&word, true).is_ok(), unk.is_empty());
    }
}
