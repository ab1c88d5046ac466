//! The scoring functions on small inputs.
//!
//!     cargo run --example metrics

use iealign::metrics::{
    exact_match_f1, header_soft_f1, ondemand_score, openie_tuple_f1, rouge_l_f1, sentence_bleu_m3, Prf,
};
use iealign::model::{Entity, OpenTuple};
use iealign::Extraction;

fn main() -> iealign::Result<()> {
    let ent = |m: &str, l: &str| Entity { mention: m.into(), label: l.into() };
    let gold = Extraction::Ner(vec![ent("Paris", "LOC"), ent("Obama", "PER"), ent("UN", "ORG")]);
    let pred = Extraction::Ner(vec![ent("Paris", "LOC"), ent("Obama", "ORG")]);
    let a = exact_match_f1(&pred, &gold)?;
    let b = exact_match_f1(&gold, &gold)?;
    println!("instance F1 {:.3} and {:.3}, micro {:.3}", a.f1, b.f1, Prf::micro([&a, &b]).f1);

    let t = |p: &str, s: &str, o: &str| OpenTuple {
        predicate: p.into(),
        subject: s.into(),
        object: o.into(),
        time: None,
        location: None,
    };
    let tuples = openie_tuple_f1(&[t("visited", "Obama", "Paris")], &[t("visited", "Barack Obama", "Paris")]);
    println!("open IE tuple F1 {:.3}", tuples.f1);

    let headers = header_soft_f1(&["Name".into(), "Birth date".into()], &["name".into(), "date of birth".into()], 0.5);
    println!("header soft F1 {:.3}", headers.f1);
    println!("ROUGE-L {:.3}", rouge_l_f1("the cat sat on the mat", "the cat lay on a mat"));
    println!("BLEU {:.3}", sentence_bleu_m3("(Jobs; founder; Apple);", "(Jobs; founder of; Apple);"));

    let table = "| Name | Age |\n|---|---|\n| Ann | 30 |";
    let gold_table = "| Name | Age |\n|---|---|\n| Ann | 31 |";
    println!("on-demand {:?}", ondemand_score(table, gold_table));
    Ok(())
}
