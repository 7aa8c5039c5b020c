//! Cleans a small catalog and statement file, then splits the statements.

use std::collections::BTreeSet;

use isorec::catalog::{clean_text, parse_courses, parse_statements, split_statements, CatalogOptions};

const COURSES: &str = r#"{"faculty":"ELG","code":"2136","title":"Electronics I","description":"Physics of semiconductors; diodes, transistors & amplifiers.","components":"Lecture, Laboratory","language":"english"}
{"faculty":"MCG","code":"4136","title":"Mechatronics","description":"Sensors, actuators and embedded control of mechanical systems.","components":"Lecture","language":"english"}
{"faculty":"ELG","code":"6393","title":"Robot Control","description":"Kinematics and dynamics of manipulators with feedback control.","components":"Lecture","language":"english"}
{"faculty":"SEG","code":"2105","title":"Génie logiciel","description":"Introduction au génie logiciel et aux exigences.","components":"Cours","language":"french"}"#;

const STATEMENTS: &str = r#"{"id":"s1","text":"I like mechatronics!","liked":["MCG 4136","ELG 6393"]}
{"id":"s2","text":"Transistors fascinate me","liked":"ELG 2136"}
{"id":"s3","text":"robots and control","liked":["ELG 6393"]}
{"id":"s4","text":"courses that do not exist","liked":["XYZ 1000"]}
{"id":"s5","text":"building small circuits","liked":["elg2136"]}"#;

fn main() -> isorec::Result<()> {
    println!("{:?}", clean_text("  Electronics I. Physics of Semiconductors™ — 3 units!  "));

    let courses = parse_courses(COURSES.as_bytes(), &CatalogOptions::default())?;
    for c in &courses {
        println!("{:<9} {}", c.key().as_str(), c.text_for_encoder);
    }

    let known: BTreeSet<_> = courses.iter().map(|c| c.key()).collect();
    let load = parse_statements(STATEMENTS.as_bytes(), &known)?;
    println!("{} statements kept, {} dropped", load.records.len(), load.dropped_unknown);

    let split = split_statements(&load.records, 7, 0.75)?;
    let ids = |v: &[isorec::catalog::StatementRecord]| v.iter().map(|s| s.id.clone()).collect::<Vec<_>>();
    println!("train {:?}", ids(&split.train));
    println!("test  {:?}", ids(&split.test));
    Ok(())
}
