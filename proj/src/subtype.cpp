#include "neurofuse/subtype.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "neurofuse/csv.hpp"
#include "neurofuse/error.hpp"
#include "neurofuse/stats.hpp"

namespace neurofuse::subtype {

ComponentRanking rank_components(const Eigen::MatrixXd& loadings, std::span<const Group> groups,
                                 double q) {
  if (static_cast<std::size_t>(loadings.rows()) != groups.size())
    throw DataError("rank_components: group labels do not match loading rows");
  if (loadings.cols() < 1) throw DataError("rank_components: no components");
  const auto n_hc = std::count(groups.begin(), groups.end(), Group::HC);
  if (n_hc == 0 || n_hc == static_cast<std::ptrdiff_t>(groups.size()))
    throw DataError("rank_components: both HC and PD subjects are required");

  ComponentRanking ranking;
  ranking.q = q;
  const auto c = static_cast<std::size_t>(loadings.cols());
  ranking.components.resize(c);
  std::vector<double> p_values(c, 1.0);
  for (std::size_t k = 0; k < c; ++k) {
    std::vector<double> hc, pd;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const double v = loadings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      (groups[i] == Group::HC ? hc : pd).push_back(v);
    }
    auto& s = ranking.components[k];
    s.component = k;
    try {
      const auto t = stats::student_t(hc, pd);
      s.t = t.statistic;
      s.p = t.p_value;
      s.hedges_g = stats::hedges_g(hc, pd).g;
    } catch (const std::exception& e) {
      s.error = e.what();
      s.p = 1.0;
    }
    p_values[k] = s.p;
  }

  const auto fdr = stats::fdr_bh(p_values, q);
  for (std::size_t k = 0; k < c; ++k) {
    auto& s = ranking.components[k];
    s.p_fdr = fdr.adjusted[k];
    s.significant = fdr.reject[k] && s.error.empty();
    if (s.significant) ranking.order.push_back(k);
  }
  std::stable_sort(ranking.order.begin(), ranking.order.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(ranking.components[a].hedges_g) > std::fabs(ranking.components[b].hedges_g);
  });
  for (std::size_t r = 0; r < ranking.order.size(); ++r)
    ranking.components[ranking.order[r]].rank = r + 1;
  return ranking;
}

std::vector<std::size_t> threshold_loadings(std::span<const double> loadings,
                                            std::optional<double> anchor_mean) {
  if (loadings.empty()) throw DataError("threshold_loadings: no patients");
  const double mu = anchor_mean ? *anchor_mean : stats::mean(loadings);
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < loadings.size(); ++i) {
    const bool pick = mu >= 0.0 ? loadings[i] > mu : loadings[i] < mu;
    if (pick) selected.push_back(i);
  }
  return selected;
}

std::string to_string(Label label) {
  switch (label) {
    case Label::A: return "A";
    case Label::B: return "B";
    case Label::AB: return "AB";
    case Label::Unassigned: return "Unassigned";
  }
  return "Unassigned";
}

Label label_from_string(const std::string& text) {
  if (text == "A") return Label::A;
  if (text == "B") return Label::B;
  if (text == "AB") return Label::AB;
  if (text == "Unassigned") return Label::Unassigned;
  throw DataError("unknown subtype label '" + text + "'");
}

std::vector<std::string> SubtypeAssignment::members(Label label) const {
  std::vector<std::string> out;
  for (const auto& p : patients) {
    if (p.label == label) out.push_back(p.subject_id);
  }
  return out;
}

SubtypeAssignment assign_subtypes(std::span<const std::string> selection_1,
                                  std::span<const std::string> selection_2,
                                  std::span<const std::string> pd_cohort,
                                  const std::string& source_1, const std::string& source_2) {
  const std::set<std::string> cohort(pd_cohort.begin(), pd_cohort.end());
  if (cohort.size() != pd_cohort.size()) throw DataError("assign_subtypes: duplicate cohort ids");
  const std::set<std::string> s1(selection_1.begin(), selection_1.end());
  const std::set<std::string> s2(selection_2.begin(), selection_2.end());
  for (const auto* sel : {&s1, &s2}) {
    for (const auto& id : *sel) {
      if (!cohort.contains(id))
        throw DataError("assign_subtypes: selected subject '" + id + "' is not in the PD cohort");
    }
  }

  SubtypeAssignment out;
  for (const auto& id : pd_cohort) {
    const bool in1 = s1.contains(id);
    const bool in2 = s2.contains(id);
    Assignment a{id, Label::Unassigned, ""};
    if (in1 && in2) {
      a.label = Label::AB;
      a.selected_by = source_1 + "+" + source_2;
    } else if (in1) {
      a.label = Label::A;
      a.selected_by = source_1;
    } else if (in2) {
      a.label = Label::B;
      a.selected_by = source_2;
    }
    out.patients.push_back(std::move(a));
  }
  return out;
}

CorrelationTable correlate_loadings_clinical(const SubtypeAssignment& assignment,
                                             std::span<const std::string> loading_ids,
                                             const Eigen::MatrixXd& loadings,
                                             std::span<const std::size_t> components,
                                             std::span<const ClinicalRecord> clinical) {
  if (static_cast<std::size_t>(loadings.rows()) != loading_ids.size())
    throw DataError("correlate_loadings_clinical: loading ids do not match rows");
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < loading_ids.size(); ++i) row_of[loading_ids[i]] = i;
  std::unordered_map<std::string, const ClinicalRecord*> record_of;
  for (const auto& r : clinical) record_of[r.subject_id] = &r;

  using Getter = std::optional<double> (*)(const ClinicalRecord&);
  const std::vector<std::pair<std::string, Getter>> variables = {
      {"age", [](const ClinicalRecord& r) { return std::optional<double>(r.age); }},
      {"updrs_off", [](const ClinicalRecord& r) { return r.updrs_off; }},
      {"updrs_on", [](const ClinicalRecord& r) { return r.updrs_on; }},
      {"hy", [](const ClinicalRecord& r) { return r.hy; }},
      {"age_at_onset", [](const ClinicalRecord& r) { return r.age_at_onset; }},
  };

  CorrelationTable table;
  for (Label label : {Label::A, Label::B, Label::AB}) {
    const auto ids = assignment.members(label);
    if (ids.size() < 3) {
      table.notices.push_back("subtype " + to_string(label) + " skipped: " +
                              std::to_string(ids.size()) + " patients (need >= 3)");
      continue;
    }
    for (std::size_t comp : components) {
      if (comp >= static_cast<std::size_t>(loadings.cols()))
        throw DataError("correlate_loadings_clinical: component index out of range");
      std::vector<double> load;
      std::vector<const ClinicalRecord*> recs;
      for (const auto& id : ids) {
        const auto row = row_of.find(id);
        const auto rec = record_of.find(id);
        if (row == row_of.end()) throw DataError("no loadings for subject " + id);
        if (rec == record_of.end()) throw DataError("no clinical record for subject " + id);
        load.push_back(loadings(static_cast<Eigen::Index>(row->second), static_cast<Eigen::Index>(comp)));
        recs.push_back(rec->second);
      }
      for (const auto& [name, get] : variables) {
        std::vector<double> values;
        for (const auto* r : recs) {
          const auto v = get(*r);
          if (!v) throw DataError("clinical variable " + name + " missing for " + r->subject_id +
                                  "; impute before correlating");
          values.push_back(*v);
        }
        try {
          const auto test = stats::pearson(load, values);
          table.rows.push_back({label, comp, name, ids.size(), test.statistic, test.p_value,
                                test.p_value < 0.05});
        } catch (const NumericalError&) {
          table.notices.push_back("subtype " + to_string(label) + " comp_" + std::to_string(comp + 1) +
                                  " " + name + " skipped: zero variance");
        }
      }
    }
  }
  return table;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DataError("adjusted_rand_index: length mismatch");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const auto choose2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, v] : joint) index += choose2(v);
  for (const auto& [k, v] : ra) sum_a += choose2(v);
  for (const auto& [k, v] : rb) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial and identical
  return (index - expected) / (max_index - expected);
}

// ---- files ------------------------------------------------------------------

void write_ranking_csv(const std::filesystem::path& path, const ComponentRanking& ranking) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "component,t,p,p_fdr,hedges_g,rank\n";
  for (const auto& s : ranking.components) {
    out << "comp_" << s.component + 1 << ',' << csv::format(s.t) << ',' << csv::format(s.p) << ','
        << csv::format(s.p_fdr) << ',' << csv::format(s.hedges_g) << ',' << s.rank << '\n';
  }
}

ComponentRanking read_ranking_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::vector<std::string> expected{"component", "t", "p", "p_fdr", "hedges_g", "rank"};
  if (table.header != expected) throw DataError(path.string() + ": unexpected ranking header");
  ComponentRanking ranking;
  std::vector<std::pair<std::size_t, std::size_t>> ranked;  // (rank, component)
  for (const auto& row : table.rows) {
    ComponentStats s;
    if (row[0].rfind("comp_", 0) != 0) throw DataError(path.string() + ": bad component " + row[0]);
    const auto index = csv::parse_int(row[0].substr(5), path.string());
    if (index < 1) throw DataError(path.string() + ": bad component " + row[0]);
    s.component = static_cast<std::size_t>(index - 1);
    s.t = csv::parse_double(row[1], path.string());
    s.p = csv::parse_double(row[2], path.string());
    s.p_fdr = csv::parse_double(row[3], path.string());
    s.hedges_g = csv::parse_double(row[4], path.string());
    s.rank = static_cast<std::size_t>(csv::parse_int(row[5], path.string()));
    s.significant = s.rank > 0;
    if (s.rank > 0) ranked.emplace_back(s.rank, s.component);
    ranking.components.push_back(s);
  }
  std::sort(ranked.begin(), ranked.end());
  for (const auto& [r, c] : ranked) ranking.order.push_back(c);
  return ranking;
}

void write_subtype_csv(const std::filesystem::path& path, const SubtypeAssignment& assignment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "subject_id,label,selected_by\n";
  for (const auto& p : assignment.patients)
    out << p.subject_id << ',' << to_string(p.label) << ',' << p.selected_by << '\n';
}

SubtypeAssignment read_subtype_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::vector<std::string> expected{"subject_id", "label", "selected_by"};
  if (table.header != expected) throw DataError(path.string() + ": unexpected subtype header");
  SubtypeAssignment a;
  for (const auto& row : table.rows) a.patients.push_back({row[0], label_from_string(row[1]), row[2]});
  return a;
}

void write_correlation_csv(const std::filesystem::path& path, const CorrelationTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "subtype,component,variable,n,r,p,significant\n";
  for (const auto& r : table.rows) {
    out << to_string(r.subtype) << ",comp_" << r.component + 1 << ',' << r.variable << ',' << r.n
        << ',' << csv::format(r.r) << ',' << csv::format(r.p) << ',' << (r.significant ? 1 : 0)
        << '\n';
  }
}

}  // namespace neurofuse::subtype
