use super::{Cohort, IptwError, Subject};
use crate::data::{AgeGroup, Gender, Trial};
use crate::glm::{BsplineBasis, DesignMatrix, GlmError, KnotRule};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Subject-level variables available to the weight models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Bo06,
    Adolescent,
    Adult,
    Male,
    GenPre,
    RulePre,
    GenPost,
    RulePost,
    /// Good histological response, the effect modifier.
    Gr,
}

impl Covariate {
    /// Exposure-related confounders, in design order.
    pub const CONFOUNDERS: [Covariate; 8] = [
        Covariate::Bo06,
        Covariate::Adolescent,
        Covariate::Adult,
        Covariate::Male,
        Covariate::GenPre,
        Covariate::RulePre,
        Covariate::GenPost,
        Covariate::RulePost,
    ];

    pub const MOTOX: [Covariate; 4] = [
        Covariate::GenPre,
        Covariate::RulePre,
        Covariate::GenPost,
        Covariate::RulePost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Bo06 => "BO06",
            Covariate::Adolescent => "adolescent",
            Covariate::Adult => "adult",
            Covariate::Male => "male",
            Covariate::GenPre => "motox_gen_pre",
            Covariate::RulePre => "motox_rule_pre",
            Covariate::GenPost => "motox_gen_post",
            Covariate::RulePost => "motox_rule_post",
            Covariate::Gr => "GR",
        }
    }

    pub fn value(self, s: &Subject) -> f64 {
        let flag = |b: bool| f64::from(u8::from(b));
        match self {
            Covariate::Bo06 => flag(s.trial == Trial::BO06),
            Covariate::Adolescent => flag(s.age_group == AgeGroup::Adolescent),
            Covariate::Adult => flag(s.age_group == AgeGroup::Adult),
            Covariate::Male => flag(s.gender == Gender::Male),
            Covariate::GenPre => s.motox.gen_pre,
            Covariate::RulePre => s.motox.rule_pre,
            Covariate::GenPost => s.motox.gen_post,
            Covariate::RulePost => s.motox.rule_post,
            Covariate::Gr => f64::from(s.effect_modifier),
        }
    }

    pub fn values(self, cohort: &Cohort) -> Vec<f64> {
        cohort.subjects().iter().map(|s| self.value(s)).collect()
    }

    /// Binary dummies are categorical; MOTox scores are continuous.
    pub fn is_categorical(self) -> bool {
        !Covariate::MOTOX.contains(&self)
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One block of design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Main(Covariate),
    Interaction(Covariate, Covariate),
    /// B-spline basis without its first function.
    Spline {
        covariate: Covariate,
        degree: usize,
        interior_knots: usize,
    },
}

/// Declarative denominator model. The numerator model is always
/// intercept + GR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub id: String,
    pub terms: Vec<Term>,
    #[serde(default)]
    pub knot_rule: KnotRule,
}

const BASELINE: [Covariate; 4] = [
    Covariate::Bo06,
    Covariate::Adolescent,
    Covariate::Adult,
    Covariate::Male,
];

impl WeightSpec {
    pub fn new(id: impl Into<String>, terms: Vec<Term>) -> Self {
        Self {
            id: id.into(),
            terms,
            knot_rule: KnotRule::default(),
        }
    }

    /// Main effects only, MOTox linear on the log-odds.
    pub fn iptw1() -> Self {
        let mut terms: Vec<Term> = BASELINE.iter().map(|&c| Term::Main(c)).collect();
        terms.extend(Covariate::MOTOX.iter().map(|&c| Term::Main(c)));
        terms.push(Term::Main(Covariate::Gr));
        Self::new("iptw1", terms)
    }

    /// Adds gen × rule products within each period.
    pub fn iptw2() -> Self {
        let mut spec = Self::iptw1();
        spec.id = "iptw2".into();
        spec.terms.push(Term::Interaction(Covariate::GenPre, Covariate::RulePre));
        spec.terms.push(Term::Interaction(Covariate::GenPost, Covariate::RulePost));
        spec
    }

    /// Adds trial × MOTox products.
    pub fn iptw3() -> Self {
        let mut spec = Self::iptw1();
        spec.id = "iptw3".into();
        spec.terms.extend(Covariate::MOTOX.iter().map(|&c| Term::Interaction(Covariate::Bo06, c)));
        spec
    }

    /// Replaces each MOTox main effect with a cubic B-spline with three
    /// interior knots.
    pub fn iptw4() -> Self {
        let mut terms: Vec<Term> = BASELINE.iter().map(|&c| Term::Main(c)).collect();
        terms.extend(Covariate::MOTOX.iter().map(|&c| Term::Spline {
            covariate: c,
            degree: 3,
            interior_knots: 3,
        }));
        terms.push(Term::Main(Covariate::Gr));
        Self::new("iptw4", terms)
    }

    /// Adds GR × MOTox products.
    pub fn iptw5() -> Self {
        let mut spec = Self::iptw1();
        spec.id = "iptw5".into();
        spec.terms.extend(Covariate::MOTOX.iter().map(|&c| Term::Interaction(Covariate::Gr, c)));
        spec
    }

    pub fn standard() -> Vec<WeightSpec> {
        vec![Self::iptw1(), Self::iptw2(), Self::iptw3(), Self::iptw4(), Self::iptw5()]
    }

    /// Looks up one of the five standard specifications (`iptw1`..`iptw5`).
    pub fn by_id(id: &str) -> Result<Self, IptwError> {
        let wanted = id.to_ascii_lowercase();
        Self::standard()
            .into_iter()
            .find(|s| s.id == wanted)
            .ok_or_else(|| IptwError::UnknownSpec(id.to_string()))
    }

    /// IPTW1 with one covariate dropped; used to study misspecification.
    pub fn without(&self, dropped: Covariate) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|t| match t {
                Term::Main(c) => *c != dropped,
                Term::Interaction(a, b) => *a != dropped && *b != dropped,
                Term::Spline { covariate, .. } => *covariate != dropped,
            })
            .cloned()
            .collect();
        Self {
            id: format!("{}-no-{}", self.id, dropped.name()),
            terms,
            knot_rule: self.knot_rule.clone(),
        }
    }
}

fn spline_columns(
    x: &[f64],
    degree: usize,
    interior: usize,
    rule: &KnotRule,
) -> Result<Vec<Vec<f64>>, GlmError> {
    let basis = match BsplineBasis::fit(x, degree, interior, rule) {
        Ok(b) => b,
        // heavily tied scores: fall back to quantiles of the distinct values
        Err(GlmError::DegenerateInput(_)) if *rule == KnotRule::Quantile => {
            BsplineBasis::fit(x, degree, interior, &KnotRule::DistinctQuantile)?
        }
        Err(e) => return Err(e),
    };
    Ok(basis.design_columns(x))
}

/// Denominator design: intercept followed by the spec's terms in order.
pub fn build_design(spec: &WeightSpec, cohort: &Cohort) -> Result<DesignMatrix, IptwError> {
    let n = cohort.len();
    let mut builder = DesignMatrix::builder(n);
    for term in &spec.terms {
        match term {
            Term::Main(c) => builder.add(c.name(), c.values(cohort)),
            Term::Interaction(a, b) => {
                let va = a.values(cohort);
                let vb = b.values(cohort);
                builder.add(
                    format!("{}:{}", a.name(), b.name()),
                    va.iter().zip(&vb).map(|(x, y)| x * y).collect(),
                );
            }
            Term::Spline {
                covariate,
                degree,
                interior_knots,
            } => {
                let cols =
                    spline_columns(&covariate.values(cohort), *degree, *interior_knots, &spec.knot_rule)?;
                for (k, col) in cols.into_iter().enumerate() {
                    builder.add(format!("bs({})[{}]", covariate.name(), k + 1), col);
                }
            }
        }
    }
    Ok(builder.build()?)
}

/// Numerator design: intercept and GR.
pub fn numerator_design(cohort: &Cohort) -> Result<DesignMatrix, IptwError> {
    Ok(DesignMatrix::builder(cohort.len())
        .push(Covariate::Gr.name(), Covariate::Gr.values(cohort))
        .build()?)
}
