use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Column prefixes for raw report items and the column each group is normalized by.
pub const INCOME_PREFIX: &str = "income.";
pub const BALANCE_PREFIX: &str = "balance.";
pub const CASHFLOW_PREFIX: &str = "cashflow.";
pub const TOTAL_REVENUE: &str = "total_revenue";
pub const CASH_FROM_OPERATIONS: &str = "cash_from_operating_activities";
pub const TOTAL_EQUITY: &str = "total_equity";

const FIXED_COLUMNS: [&str; 10] = [
    "ticker",
    "year",
    "ipo_date",
    "portfolio_size",
    "employees",
    "shareholders",
    "shares_outstanding",
    TOTAL_REVENUE,
    CASH_FROM_OPERATIONS,
    TOTAL_EQUITY,
];

/// Raw annual-report values for one company and fiscal year, as read from disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawReport {
    pub total_revenue: Option<f64>,
    pub cash_from_operating_activities: Option<f64>,
    pub total_equity: Option<f64>,
    pub income: BTreeMap<String, f64>,
    pub balance: BTreeMap<String, f64>,
    pub cashflow: BTreeMap<String, f64>,
}

/// Company fundamentals for one fiscal year with report items normalized:
/// income statement by total revenue, balance sheet by cash from operating
/// activities, cash flow by total equity. Share, employee and shareholder counts
/// stay raw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fundamentals {
    pub ticker: String,
    pub year: i32,
    pub portfolio_size: u32,
    pub ipo_date: NaiveDate,
    pub employees: Option<u64>,
    pub shareholders: Option<u64>,
    pub shares_outstanding: Option<f64>,
    pub income_items: BTreeMap<String, f64>,
    pub balance_items: BTreeMap<String, f64>,
    pub cashflow_items: BTreeMap<String, f64>,
    raw: RawReport,
}

fn normalize(
    items: &BTreeMap<String, f64>,
    denom: Option<f64>,
    ticker: &str,
    year: i32,
    denominator: &'static str,
) -> Result<BTreeMap<String, f64>, CorpusError> {
    if items.is_empty() {
        return Ok(BTreeMap::new());
    }
    match denom {
        Some(d) if d != 0.0 && d.is_finite() => {
            Ok(items.iter().map(|(k, v)| (k.clone(), v / d)).collect())
        }
        _ => Err(CorpusError::ZeroDenominator {
            ticker: ticker.to_string(),
            year,
            denominator,
        }),
    }
}

impl Fundamentals {
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw(
        ticker: impl Into<String>,
        year: i32,
        portfolio_size: u32,
        ipo_date: NaiveDate,
        employees: Option<u64>,
        shareholders: Option<u64>,
        shares_outstanding: Option<f64>,
        raw: RawReport,
    ) -> Result<Self, CorpusError> {
        let ticker = ticker.into();
        if let Some(s) = shares_outstanding {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CorpusError::Invalid(format!(
                    "{ticker}/{year}: shares_outstanding must be positive"
                )));
            }
        }
        for (name, d) in [
            (TOTAL_REVENUE, raw.total_revenue),
            (CASH_FROM_OPERATIONS, raw.cash_from_operating_activities),
            (TOTAL_EQUITY, raw.total_equity),
        ] {
            if d == Some(0.0) {
                return Err(CorpusError::ZeroDenominator {
                    ticker,
                    year,
                    denominator: name,
                });
            }
        }
        let income_items = normalize(&raw.income, raw.total_revenue, &ticker, year, TOTAL_REVENUE)?;
        let balance_items = normalize(
            &raw.balance,
            raw.cash_from_operating_activities,
            &ticker,
            year,
            CASH_FROM_OPERATIONS,
        )?;
        let cashflow_items =
            normalize(&raw.cashflow, raw.total_equity, &ticker, year, TOTAL_EQUITY)?;
        Ok(Fundamentals {
            ticker,
            year,
            portfolio_size,
            ipo_date,
            employees,
            shareholders,
            shares_outstanding,
            income_items,
            balance_items,
            cashflow_items,
            raw,
        })
    }

    pub fn raw(&self) -> &RawReport {
        &self.raw
    }

    /// Company age in years at `date`, from the IPO date.
    pub fn age_years(&self, date: NaiveDate) -> f64 {
        (date - self.ipo_date).num_days() as f64 / 365.25
    }
}

/// All fundamentals rows keyed by `(ticker, year)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FundamentalsTable {
    rows: BTreeMap<(String, i32), Fundamentals>,
}

impl FundamentalsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, f: Fundamentals) -> Result<(), CorpusError> {
        let key = (f.ticker.clone(), f.year);
        if self.rows.contains_key(&key) {
            return Err(CorpusError::DuplicateFundamentals {
                ticker: key.0,
                year: key.1,
            });
        }
        self.rows.insert(key, f);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fundamentals> {
        self.rows.values()
    }

    pub fn get(&self, ticker: &str, year: i32) -> Option<&Fundamentals> {
        self.rows.get(&(ticker.to_string(), year))
    }

    /// Most recent fiscal year strictly before the event's calendar year.
    pub fn latest_before(&self, ticker: &str, date: NaiveDate) -> Option<&Fundamentals> {
        let lo = (ticker.to_string(), i32::MIN);
        let hi = (ticker.to_string(), date.year());
        self.rows.range(lo..hi).next_back().map(|(_, f)| f)
    }

    /// Sorted union of normalized item names, prefixed by their report group.
    pub fn item_names(&self) -> Vec<String> {
        let mut names = std::collections::BTreeSet::new();
        for f in self.rows.values() {
            names.extend(f.income_items.keys().map(|k| format!("{INCOME_PREFIX}{k}")));
            names.extend(
                f.balance_items
                    .keys()
                    .map(|k| format!("{BALANCE_PREFIX}{k}")),
            );
            names.extend(
                f.cashflow_items
                    .keys()
                    .map(|k| format!("{CASHFLOW_PREFIX}{k}")),
            );
        }
        names.into_iter().collect()
    }
}

fn parse_opt<T: std::str::FromStr>(
    s: &str,
    line: usize,
    col: &str,
) -> Result<Option<T>, CorpusError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<T>().map(Some).map_err(|_| CorpusError::Parse {
        line,
        message: format!("column '{col}': cannot parse '{s}'"),
    })
}

fn parse_req<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<T, CorpusError> {
    parse_opt(s, line, col)?.ok_or_else(|| CorpusError::Parse {
        line,
        message: format!("column '{col}' is required"),
    })
}

pub fn parse_fundamentals<R: Read>(reader: R) -> Result<FundamentalsTable, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    for required in ["ticker", "year", "ipo_date", "portfolio_size"] {
        if col(required).is_none() {
            return Err(CorpusError::Parse {
                line: 1,
                message: format!("missing column '{required}'"),
            });
        }
    }
    for h in headers.iter() {
        let known = FIXED_COLUMNS.contains(&h)
            || h.starts_with(INCOME_PREFIX)
            || h.starts_with(BALANCE_PREFIX)
            || h.starts_with(CASHFLOW_PREFIX);
        if !known {
            return Err(CorpusError::Parse {
                line: 1,
                message: format!("unknown column '{h}'"),
            });
        }
    }
    let mut table = FundamentalsTable::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |name: &str| col(name).and_then(|c| rec.get(c)).unwrap_or("");
        let mut raw = RawReport {
            total_revenue: parse_opt(field(TOTAL_REVENUE), line, TOTAL_REVENUE)?,
            cash_from_operating_activities: parse_opt(
                field(CASH_FROM_OPERATIONS),
                line,
                CASH_FROM_OPERATIONS,
            )?,
            total_equity: parse_opt(field(TOTAL_EQUITY), line, TOTAL_EQUITY)?,
            ..Default::default()
        };
        for (h, v) in headers.iter().zip(rec.iter()) {
            if FIXED_COLUMNS.contains(&h) {
                continue;
            }
            let Some(value) = parse_opt::<f64>(v, line, h)? else {
                continue;
            };
            if let Some(name) = h.strip_prefix(INCOME_PREFIX) {
                raw.income.insert(name.to_string(), value);
            } else if let Some(name) = h.strip_prefix(BALANCE_PREFIX) {
                raw.balance.insert(name.to_string(), value);
            } else if let Some(name) = h.strip_prefix(CASHFLOW_PREFIX) {
                raw.cashflow.insert(name.to_string(), value);
            }
        }
        let f = Fundamentals::from_raw(
            field("ticker").to_string(),
            parse_req(field("year"), line, "year")?,
            parse_req(field("portfolio_size"), line, "portfolio_size")?,
            parse_req(field("ipo_date"), line, "ipo_date")?,
            parse_opt(field("employees"), line, "employees")?,
            parse_opt(field("shareholders"), line, "shareholders")?,
            parse_opt(field("shares_outstanding"), line, "shares_outstanding")?,
            raw,
        )?;
        table.insert(f)?;
    }
    Ok(table)
}

pub fn load_fundamentals(path: impl AsRef<Path>) -> Result<FundamentalsTable, CorpusError> {
    parse_fundamentals(File::open(path.as_ref())?)
}

pub fn write_fundamentals(
    path: impl AsRef<Path>,
    table: &FundamentalsTable,
) -> Result<(), CorpusError> {
    let mut income = std::collections::BTreeSet::new();
    let mut balance = std::collections::BTreeSet::new();
    let mut cashflow = std::collections::BTreeSet::new();
    for f in table.iter() {
        income.extend(f.raw.income.keys().cloned());
        balance.extend(f.raw.balance.keys().cloned());
        cashflow.extend(f.raw.cashflow.keys().cloned());
    }
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(income.iter().map(|k| format!("{INCOME_PREFIX}{k}")));
    header.extend(balance.iter().map(|k| format!("{BALANCE_PREFIX}{k}")));
    header.extend(cashflow.iter().map(|k| format!("{CASHFLOW_PREFIX}{k}")));

    let err = |e: csv::Error| CorpusError::Parse {
        line: 0,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(err)?;
    w.write_record(&header).map_err(err)?;
    fn opt<T: ToString>(v: Option<T>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    for f in table.iter() {
        let mut row = vec![
            f.ticker.clone(),
            f.year.to_string(),
            f.ipo_date.to_string(),
            f.portfolio_size.to_string(),
            opt(f.employees),
            opt(f.shareholders),
            opt(f.shares_outstanding),
            opt(f.raw.total_revenue),
            opt(f.raw.cash_from_operating_activities),
            opt(f.raw.total_equity),
        ];
        row.extend(income.iter().map(|k| opt(f.raw.income.get(k))));
        row.extend(balance.iter().map(|k| opt(f.raw.balance.get(k))));
        row.extend(cashflow.iter().map(|k| opt(f.raw.cashflow.get(k))));
        w.write_record(&row).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}
