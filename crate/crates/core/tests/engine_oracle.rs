mod common;

use std::cmp::Ordering;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

use vkgmap::engine::{eval_sql, ColumnType, Database, Value};

#[derive(Debug, Clone, Copy)]
enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn sql(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "<>",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }

    fn holds(self, o: Ordering) -> bool {
        match self {
            Op::Eq => o == Ordering::Equal,
            Op::Ne => o != Ordering::Equal,
            Op::Lt => o == Ordering::Less,
            Op::Le => o != Ordering::Greater,
            Op::Gt => o == Ordering::Greater,
            Op::Ge => o != Ordering::Less,
        }
    }
}

fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Int(x), Value::Decimal(y)) => Some(Decimal::from(*x).cmp(y)),
        (Value::Decimal(x), Value::Int(y)) => Some(x.cmp(&Decimal::from(*y))),
        (Value::Decimal(x), Value::Decimal(y)) => Some(x.cmp(y)),
        (Value::Str(x), Value::Str(y)) | (Value::DateTime(x), Value::DateTime(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn sql_literal(v: &Value) -> String {
    match v {
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
        Value::DateTime(s) => format!("'{}'", s.replacen('T', " ", 1)),
        other => other.to_string(),
    }
}

enum Cond {
    Cols((usize, usize), Op, (usize, usize)),
    Const((usize, usize), Op, Value),
}

struct Query {
    sources: Vec<String>,
    projection: Vec<(usize, usize)>,
    conds: Vec<Cond>,
}

fn random_query(rng: &mut ChaCha8Rng, db: &Database) -> Query {
    let names: Vec<String> = db.tables().map(|t| t.name.clone()).collect();
    let sources: Vec<String> = (0..rng.random_range(1..=3)).map(|_| names.choose(rng).unwrap().clone()).collect();
    let cols = |s: usize| db.table(&sources[s]).unwrap().columns.clone();
    let mut projection = Vec::new();
    for s in 0..sources.len() {
        for c in 0..cols(s).len() {
            if rng.random_bool(0.5) {
                projection.push((s, c));
            }
        }
    }
    if projection.is_empty() {
        projection.push((0, 0));
    }
    let ops = [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge];
    let mut conds = Vec::new();
    for s in 1..sources.len() {
        if rng.random_bool(0.8) {
            conds.push(Cond::Cols((rng.random_range(0..s), 0), Op::Eq, (s, 0)));
        }
    }
    for _ in 0..rng.random_range(0..=2) {
        let s = rng.random_range(0..sources.len());
        let c = rng.random_range(0..cols(s).len());
        let ty = cols(s)[c].ty;
        let v = common::random_value(rng, ty, false);
        conds.push(Cond::Const((s, c), *ops.choose(rng).unwrap(), v));
    }
    if rng.random_bool(0.3) {
        // integer against decimal, or same-typed columns
        let s = rng.random_range(0..sources.len());
        let t = rng.random_range(0..sources.len());
        let pairs: Vec<(usize, usize)> = (0..cols(s).len())
            .flat_map(|a| (0..cols(t).len()).map(move |b| (a, b)))
            .filter(|&(a, b)| {
                let (x, y) = (cols(s)[a].ty, cols(t)[b].ty);
                x == y || matches!((x, y), (ColumnType::Integer, ColumnType::Decimal) | (ColumnType::Decimal, ColumnType::Integer))
            })
            .collect();
        if let Some(&(a, b)) = pairs.choose(rng) {
            conds.push(Cond::Cols((s, a), *ops.choose(rng).unwrap(), (t, b)));
        }
    }
    Query { sources, projection, conds }
}

fn render(q: &Query, db: &Database) -> String {
    let col = |(s, c): (usize, usize)| format!("a{s}.{}", db.table(&q.sources[s]).unwrap().columns[c].name);
    let select: Vec<String> = q.projection.iter().map(|&p| col(p)).collect();
    let from: Vec<String> = q.sources.iter().enumerate().map(|(i, t)| format!("{t} AS a{i}")).collect();
    let mut sql = format!("SELECT {} FROM {}", select.join(", "), from.join(", "));
    let conds: Vec<String> = q
        .conds
        .iter()
        .map(|c| match c {
            Cond::Cols(a, op, b) => format!("{} {} {}", col(*a), op.sql(), col(*b)),
            Cond::Const(a, op, v) => format!("{} {} {}", col(*a), op.sql(), sql_literal(v)),
        })
        .collect();
    if !conds.is_empty() {
        sql.push_str(" WHERE ");
        sql.push_str(&conds.join(" AND "));
    }
    sql
}

fn nested_loop(q: &Query, db: &Database) -> Vec<Vec<Value>> {
    let tables: Vec<&[Vec<Value>]> = q.sources.iter().map(|t| db.table(t).unwrap().rows()).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; tables.len()];
    if tables.iter().any(|t| t.is_empty()) {
        return out;
    }
    loop {
        let get = |(s, c): (usize, usize)| &tables[s][idx[s]][c];
        let ok = q.conds.iter().all(|c| match c {
            Cond::Cols(a, op, b) => compare(get(*a), get(*b)).is_some_and(|o| op.holds(o)),
            Cond::Const(a, op, v) => compare(get(*a), v).is_some_and(|o| op.holds(o)),
        });
        if ok {
            out.push(q.projection.iter().map(|&p| get(p).clone()).collect());
        }
        let mut k = tables.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < tables[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn sorted(mut rows: Vec<Vec<Value>>) -> Vec<String> {
    let mut s: Vec<String> = rows.drain(..).map(|r| format!("{r:?}")).collect();
    s.sort();
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn engine_agrees_with_nested_loops(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let db = common::random_database(&mut rng);
        let q = random_query(&mut rng, &db);
        let sql = render(&q, &db);
        let rs = eval_sql(&sql, &db).unwrap_or_else(|e| panic!("{sql}: {e}"));
        prop_assert_eq!(sorted(rs.rows), sorted(nested_loop(&q, &db)), "{}", sql);
    }
}
