//! Calendar-quarter arithmetic on `NaiveDate`.

use chrono::{Datelike, Months, NaiveDate};

pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

fn last_day_of_month(year: i32, month: u32) -> NaiveDate {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    ymd(ny, nm, 1).pred_opt().expect("date in range")
}

/// Last day of the calendar quarter containing `date`.
pub fn quarter_end_of(date: NaiveDate) -> NaiveDate {
    let q_last_month = ((date.month() - 1) / 3 + 1) * 3;
    last_day_of_month(date.year(), q_last_month)
}

pub fn is_quarter_end(date: NaiveDate) -> bool {
    quarter_end_of(date) == date
}

pub fn next_quarter_end(quarter_end: NaiveDate) -> NaiveDate {
    quarter_end_of(quarter_end.succ_opt().expect("date in range"))
}

pub fn prev_quarter_end(date: NaiveDate) -> NaiveDate {
    let first_of_quarter = ymd(date.year(), (date.month() - 1) / 3 * 3 + 1, 1);
    first_of_quarter.pred_opt().expect("date in range")
}

/// Shift by whole months, keeping month-end dates at month end.
pub fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    if date == last_day_of_month(date.year(), date.month()) {
        let shifted = ymd(date.year(), date.month(), 1) + Months::new(months);
        last_day_of_month(shifted.year(), shifted.month())
    } else {
        date.checked_add_months(Months::new(months)).expect("date in range")
    }
}

pub fn sub_months(date: NaiveDate, months: u32) -> NaiveDate {
    if date == last_day_of_month(date.year(), date.month()) {
        let shifted = ymd(date.year(), date.month(), 1) - Months::new(months);
        last_day_of_month(shifted.year(), shifted.month())
    } else {
        date.checked_sub_months(Months::new(months)).expect("date in range")
    }
}
