use relsynth::eval::{answer_query, rel_error, Clause, GroupQuery, Grouped};
use relsynth::flat::{decompose, flatten, Attr, DecomposeNames, FlatRelation};
use relsynth::marginals::count_npm;
use relsynth::relational::{augment_size_attribute, count_group_sizes, load_database, Database, FkRef, Schema};
use relsynth::Error;
use std::path::{Path, PathBuf};

fn census_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/census")
}

fn census() -> Database {
    let schema = Schema::load(&census_dir().join("schema.json")).unwrap();
    load_database(&schema, &census_dir()).unwrap()
}

fn census_flat(db: &Database) -> FlatRelation {
    let hh = augment_size_attribute(&db.relations[0], &db.relations[1], 0, 4).unwrap();
    flatten(&db.relations[1], 0, &hh, 1, 4).unwrap()
}

const EMP: usize = 1;

#[test]
fn loads_census() {
    let db = census();
    assert_eq!(db.relations[0].len(), 3);
    assert_eq!(db.relations[1].len(), 9);
}

#[test]
fn group_sizes_and_flat_rows() {
    let db = census();
    let hh = augment_size_attribute(&db.relations[0], &db.relations[1], 0, 4).unwrap();
    assert_eq!(hh.columns[1], vec![4, 3, 2]);
    assert_eq!(count_group_sizes(&db.relations[1], 0, &db.relations[0], 4).unwrap(), vec![0, 0, 1, 1, 1]);
    let fr = census_flat(&db);
    let row: Vec<Vec<u32>> = (0..4).map(|m| (0..4).map(|b| fr.member_value(1, m, b)).collect()).collect();
    assert_eq!(row, vec![vec![6, 0, 2, 1], vec![7, 0, 1, 1], vec![2, 1, 1, 0], vec![8, 2, 3, 2]]);
    assert_eq!(fr.household[0][1], 0);
    assert_eq!(fr.sizes, vec![4, 3, 2]);
    assert_eq!(fr.size_counts(), vec![0, 0, 1, 1, 1]);
    let n_i: usize = fr.sizes.iter().sum();
    assert_eq!(n_i, db.relations[1].len());
}

#[test]
fn cap_is_enforced() {
    let db = census();
    let err = augment_size_attribute(&db.relations[0], &db.relations[1], 0, 3).unwrap_err();
    assert!(matches!(err, Error::CapExceeded { size: 4, cap: 3, .. }));
}

#[test]
fn dangling_reference_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(census_dir().join("household.csv"), dir.path().join("household.csv")).unwrap();
    let text = std::fs::read_to_string(census_dir().join("individual.csv")).unwrap();
    std::fs::write(dir.path().join("individual.csv"), text.replace("9,2,1,2,1,3", "9,2,1,2,1,7")).unwrap();
    let schema = Schema::load(&census_dir().join("schema.json")).unwrap();
    assert!(matches!(load_database(&schema, dir.path()), Err(Error::Integrity(_))));
}

#[test]
fn empty_household_needs_declaration() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("household.csv"), "H-ID,OWN\n1,0\n2,0\n3,1\n4,1\n").unwrap();
    std::fs::copy(census_dir().join("individual.csv"), dir.path().join("individual.csv")).unwrap();
    let mut schema = Schema::load(&census_dir().join("schema.json")).unwrap();
    assert!(load_database(&schema, dir.path()).is_err());
    schema.relations[1].foreign_keys[0].min_group_size = Some(0);
    let db = load_database(&schema, dir.path()).unwrap();
    let fr = census_flat(&db);
    assert_eq!(fr.sizes, vec![4, 3, 2, 0]);
}

#[test]
fn decompose_round_trip() {
    let db = census();
    let fr = census_flat(&db);
    let names = DecomposeNames {
        individual_relation: "individual".into(),
        individual_key: "P-ID".into(),
        fk_attribute: "H-ID".into(),
        household_relation: "household".into(),
        household_key: "H-ID".into(),
    };
    let (ind, hh) = decompose(&fr, &names).unwrap();
    assert_eq!(ind.columns, db.relations[1].columns);
    assert_eq!(ind.fks, db.relations[1].fks);
    assert_eq!(hh.columns[0], db.relations[0].columns[0]);
    let again = flatten(&ind, 0, &hh, 1, 4).unwrap();
    assert_eq!(again.slots, fr.slots);
    assert_eq!(again.household, fr.household);

    let mut broken = fr.clone();
    broken.slot_column_mut(2, 0)[1] = relsynth::flat::UNSET;
    assert!(matches!(decompose(&broken, &names), Err(Error::IncompleteRow { .. })));
}

#[test]
fn emp_pair_npm_for_three_member_household() {
    let fr = census_flat(&census());
    let npm = count_npm(&fr, &[Attr::individual(0, EMP), Attr::individual(1, EMP)], 3, 2).unwrap();
    // Cells in (No, No), (No, Yes), (Yes, No), (Yes, Yes) order.
    let third = 2.0 / 6.0;
    for (got, want) in npm.table.data.iter().zip([third, third, third, 0.0]) {
        assert!((got - want).abs() < 1e-12, "{:?}", npm.table.data);
    }
    assert!((npm.table.sum() - 1.0).abs() < 1e-12);
}

fn q(size: usize, own: Option<u32>, members: Vec<Vec<Clause>>) -> GroupQuery {
    GroupQuery { size, household: own.map(|v| vec![Clause { attr: 0, values: vec![v] }]).unwrap_or_default(), members }
}

#[test]
fn group_queries_on_census() {
    let db = census();
    let g = Grouped::new(&db, FkRef { relation: 1, fk: 0 }).unwrap();
    let emp_yes = || vec![Clause { attr: EMP, values: vec![1] }];
    assert_eq!(answer_query(&g, &q(3, Some(0), vec![emp_yes()]), true), 1);
    assert_eq!(answer_query(&g, &q(5, None, vec![emp_yes()]), true), 0);
    assert_eq!(answer_query(&g, &q(3, None, vec![emp_yes(), emp_yes()]), true), 0);
    assert_eq!(answer_query(&g, &q(3, None, vec![emp_yes(), emp_yes()]), false), 1);
    assert_eq!(answer_query(&g, &q(4, None, vec![emp_yes(), emp_yes()]), true), 1);
}

#[test]
fn relative_error_floor() {
    assert!((rel_error(0.0, 5.0, 1000.0) - 0.5).abs() < 1e-12);
    assert!((rel_error(20.0, 15.0, 1000.0) - 0.25).abs() < 1e-12);
}
