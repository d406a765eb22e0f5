//! Event schemas and extracted event records.
//!
//! A schema fixes an event type's code, full name, its ordered role list,
//! and which roles are key (required for a distant label to count). The
//! schema file format is line-oriented:
//!
//! ```text
//! # comment
//! event EP EquityPledge
//! role Pledger key
//! role PledgedShares key
//! role Pledgee key
//! role TotalHoldingShares
//! ```
//!
//! `event <CODE> <Name>` opens a type; each following `role <Name> [key]`
//! appends a role. Blank lines and `#` comments are ignored. Role order in
//! the file is the path-expansion order.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One event type: code, name, ordered roles, key-role flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSchema {
    pub code: String,
    pub name: String,
    roles: Vec<String>,
    key: Vec<bool>,
}

impl EventSchema {
    pub fn new(code: &str, name: &str, roles: Vec<(String, bool)>) -> Result<EventSchema> {
        if code.is_empty() || code.split_whitespace().count() != 1 {
            return Err(Error::data(format!("bad event code {code:?}")));
        }
        if name.is_empty() || name.split_whitespace().count() != 1 {
            return Err(Error::data(format!("bad event name {name:?}")));
        }
        if roles.is_empty() {
            return Err(Error::data(format!("event {name} has no roles")));
        }
        for (i, (role, _)) in roles.iter().enumerate() {
            if role.is_empty() || role.split_whitespace().count() != 1 {
                return Err(Error::data(format!("event {name}: bad role name {role:?}")));
            }
            if roles[..i].iter().any(|(r, _)| r == role) {
                return Err(Error::data(format!("event {name}: duplicate role {role}")));
            }
        }
        if !roles.iter().any(|&(_, k)| k) {
            return Err(Error::data(format!("event {name} has no key role")));
        }
        let key = roles.iter().map(|&(_, k)| k).collect();
        let roles = roles.into_iter().map(|(r, _)| r).collect();
        Ok(EventSchema { code: code.to_string(), name: name.to_string(), roles, key })
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn n_roles(&self) -> usize {
        self.roles.len()
    }

    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    pub fn is_key(&self, role_idx: usize) -> bool {
        self.key[role_idx]
    }

    pub fn key_roles(&self) -> impl Iterator<Item = &str> {
        self.roles
            .iter()
            .zip(&self.key)
            .filter(|&(_, &k)| k)
            .map(|(r, _)| r.as_str())
    }
}

/// Ordered collection of schemas; the position of a schema is its type index
/// throughout the decoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSet {
    schemas: Vec<EventSchema>,
}

impl SchemaSet {
    pub fn new(schemas: Vec<EventSchema>) -> Result<SchemaSet> {
        if schemas.is_empty() {
            return Err(Error::data("schema set is empty"));
        }
        for (i, s) in schemas.iter().enumerate() {
            if schemas[..i].iter().any(|t| t.code == s.code || t.name == s.name) {
                return Err(Error::data(format!("duplicate event type {}/{}", s.code, s.name)));
            }
        }
        Ok(SchemaSet { schemas })
    }

    /// The six built-in financial event types. Key roles follow the starred
    /// pledge roles; the other types default to their first two roles.
    pub fn default_set() -> SchemaSet {
        let def = |code: &str, name: &str, roles: &[(&str, bool)]| {
            EventSchema::new(
                code,
                name,
                roles.iter().map(|&(r, k)| (r.to_string(), k)).collect(),
            )
            .expect("built-in schema is valid")
        };
        SchemaSet::new(vec![
            def(
                "EF",
                "EquityFreeze",
                &[
                    ("EquityHolder", true),
                    ("FrozeShares", true),
                    ("LegalInstitution", false),
                    ("TotalHoldingShares", false),
                    ("TotalHoldingRatio", false),
                    ("Date", false),
                    ("UnfrozeDate", false),
                ],
            ),
            def(
                "ER",
                "EquityRepurchase",
                &[
                    ("CompanyName", true),
                    ("HighestTradingPrice", true),
                    ("LowestTradingPrice", false),
                    ("RepurchasedShares", false),
                    ("ClosingDate", false),
                    ("RepurchaseAmount", false),
                ],
            ),
            def(
                "EO",
                "EquityOverweight",
                &[
                    ("EquityHolder", true),
                    ("TradingShares", true),
                    ("Date", false),
                    ("LaterHoldingShares", false),
                    ("AveragePrice", false),
                ],
            ),
            def(
                "EU",
                "EquityUnderweight",
                &[
                    ("EquityHolder", true),
                    ("TradingShares", true),
                    ("Date", false),
                    ("LaterHoldingShares", false),
                    ("AveragePrice", false),
                ],
            ),
            def(
                "EP",
                "EquityPledge",
                &[
                    ("Pledger", true),
                    ("PledgedShares", true),
                    ("Pledgee", true),
                    ("TotalHoldingShares", false),
                    ("TotalHoldingRatio", false),
                    ("TotalPledgedShares", false),
                    ("Date", false),
                ],
            ),
            def(
                "LA",
                "Lawsuit",
                &[
                    ("Plaintiff", true),
                    ("Defendant", true),
                    ("LegalInstitution", false),
                    ("Date", false),
                ],
            ),
        ])
        .expect("built-in set is valid")
    }

    /// Parses the schema file format. `path` labels error messages.
    pub fn parse(text: &str, path: &str) -> Result<SchemaSet> {
        let mut schemas: Vec<EventSchema> = Vec::new();
        let mut open: Option<(String, String, Vec<(String, bool)>, usize)> = None;
        let close = |open: &mut Option<(String, String, Vec<(String, bool)>, usize)>,
                         schemas: &mut Vec<EventSchema>|
         -> Result<()> {
            if let Some((code, name, roles, line)) = open.take() {
                let schema = EventSchema::new(&code, &name, roles)
                    .map_err(|e| Error::parse(path, line, e.to_string()))?;
                schemas.push(schema);
            }
            Ok(())
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "event" => {
                    if fields.len() != 3 {
                        return Err(Error::parse(path, line_no, "expected: event <CODE> <Name>"));
                    }
                    close(&mut open, &mut schemas)?;
                    open = Some((fields[1].to_string(), fields[2].to_string(), Vec::new(), line_no));
                }
                "role" => {
                    let key = match fields.len() {
                        2 => false,
                        3 if fields[2] == "key" => true,
                        _ => {
                            return Err(Error::parse(path, line_no, "expected: role <Name> [key]"));
                        }
                    };
                    match open.as_mut() {
                        Some((_, _, roles, _)) => roles.push((fields[1].to_string(), key)),
                        None => {
                            return Err(Error::parse(path, line_no, "role before any event line"));
                        }
                    }
                }
                other => {
                    return Err(Error::parse(path, line_no, format!("unknown keyword {other:?}")));
                }
            }
        }
        close(&mut open, &mut schemas)?;
        SchemaSet::new(schemas)
    }

    /// Canonical text form; `parse(render(s)) == s`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.schemas.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("event {} {}\n", s.code, s.name));
            for (role, &key) in s.roles.iter().zip(&s.key) {
                out.push_str("role ");
                out.push_str(role);
                if key {
                    out.push_str(" key");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn get(&self, idx: usize) -> &EventSchema {
        &self.schemas[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &EventSchema> {
        self.schemas.iter()
    }

    /// Index lookup by full name or code.
    pub fn index_of(&self, type_name: &str) -> Option<usize> {
        self.schemas
            .iter()
            .position(|s| s.name == type_name || s.code == type_name)
    }
}

/// One filled event argument: the surface text and, when the entity is in
/// the knowledge graph, its id there.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventArg {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<usize>,
}

impl EventArg {
    pub fn new(text: &str) -> EventArg {
        EventArg { text: text.to_string(), entity_id: None }
    }
}

/// One extracted event: a type name and its role→argument map in schema
/// role order. Unfilled roles are explicit nulls.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_type: String,
    pub roles: IndexMap<String, Option<EventArg>>,
}

impl EventRecord {
    /// Builds a record with `args` in schema role order.
    pub fn new(schema: &EventSchema, args: Vec<Option<EventArg>>) -> Result<EventRecord> {
        if args.len() != schema.n_roles() {
            return Err(Error::data(format!(
                "event {}: {} arguments for {} roles",
                schema.name,
                args.len(),
                schema.n_roles()
            )));
        }
        let roles = schema.roles().iter().cloned().zip(args).collect();
        Ok(EventRecord { event_type: schema.name.clone(), roles })
    }

    /// Checks the type is known and the role keys match the schema exactly,
    /// returning the schema's index and a reference to it.
    pub fn validate<'a>(&self, set: &'a SchemaSet) -> Result<(usize, &'a EventSchema)> {
        let idx = set
            .index_of(&self.event_type)
            .ok_or_else(|| Error::data(format!("unknown event type {:?}", self.event_type)))?;
        let schema = set.get(idx);
        let keys: Vec<&str> = self.roles.keys().map(|k| k.as_str()).collect();
        let expect: Vec<&str> = schema.roles().iter().map(|r| r.as_str()).collect();
        if keys != expect {
            return Err(Error::data(format!(
                "event {}: roles {keys:?} do not match the schema",
                self.event_type
            )));
        }
        Ok((idx, schema))
    }

    pub fn arg(&self, role: &str) -> Option<&EventArg> {
        self.roles.get(role).and_then(|a| a.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_set_shape() {
        let set = SchemaSet::default_set();
        assert_eq!(set.len(), 6);
        let ep = set.get(set.index_of("EquityPledge").unwrap());
        assert_eq!(ep.code, "EP");
        assert_eq!(ep.n_roles(), 7);
        let keys: Vec<&str> = ep.key_roles().collect();
        assert_eq!(keys, vec!["Pledger", "PledgedShares", "Pledgee"]);
        for s in set.iter() {
            assert!(s.key_roles().count() >= 1);
        }
        assert_eq!(set.index_of("EF"), Some(0));
        assert_eq!(set.index_of("Lawsuit"), set.index_of("LA"));
    }

    #[test]
    fn render_parse_roundtrip() {
        let set = SchemaSet::default_set();
        let text = set.render();
        let back = SchemaSet::parse(&text, "<builtin>").unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn parse_skips_comments_and_blanks() {
        let text = "# header\n\nevent XX Example\n  role A key\n# middle\nrole B\n";
        let set = SchemaSet::parse(text, "t").unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(0).roles(), &["A".to_string(), "B".to_string()]);
        assert!(set.get(0).is_key(0));
        assert!(!set.get(0).is_key(1));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SchemaSet::parse("role A key\n", "t").unwrap_err();
        assert!(err.to_string().starts_with("t:1:"), "{err}");
        let err = SchemaSet::parse("event XX Example\nbogus A\n", "t").unwrap_err();
        assert!(err.to_string().starts_with("t:2:"), "{err}");
        let err = SchemaSet::parse("event XX\n", "t").unwrap_err();
        assert!(err.to_string().starts_with("t:1:"), "{err}");
    }

    #[test]
    fn schema_validation_rejects_bad_shapes() {
        assert!(EventSchema::new("X", "T", vec![]).is_err());
        assert!(EventSchema::new("X", "T", vec![("A".into(), false)]).is_err());
        assert!(
            EventSchema::new("X", "T", vec![("A".into(), true), ("A".into(), false)]).is_err()
        );
        let dup = SchemaSet::new(vec![
            EventSchema::new("X", "T", vec![("A".into(), true)]).unwrap(),
            EventSchema::new("X", "U", vec![("A".into(), true)]).unwrap(),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn record_builder_orders_roles() {
        let set = SchemaSet::default_set();
        let la = set.get(set.index_of("LA").unwrap());
        let rec = EventRecord::new(
            la,
            vec![Some(EventArg::new("甲")), Some(EventArg::new("乙")), None, None],
        )
        .unwrap();
        let keys: Vec<&String> = rec.roles.keys().collect();
        assert_eq!(keys, vec!["Plaintiff", "Defendant", "LegalInstitution", "Date"]);
        assert_eq!(rec.arg("Plaintiff").unwrap().text, "甲");
        assert!(rec.arg("Date").is_none());
        rec.validate(&set).unwrap();
    }

    #[test]
    fn record_validation_catches_mismatches() {
        let set = SchemaSet::default_set();
        let la = set.get(set.index_of("LA").unwrap());
        let mut rec = EventRecord::new(la, vec![None, Some(EventArg::new("乙")), None, None]).unwrap();
        rec.event_type = "NoSuchType".to_string();
        assert!(rec.validate(&set).is_err());
        let mut rec2 = EventRecord::new(la, vec![None, None, None, None]).unwrap();
        rec2.roles.shift_remove("Date");
        assert!(rec2.validate(&set).is_err());
    }
}
