#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "mobilab/csv.hpp"
#include "mobilab/panel.hpp"

namespace mobilab::panel {

namespace {

std::map<std::string, std::size_t> header_index(const csv::Record& header, const std::string& file,
                                                const std::vector<std::string>& required) {
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
        std::string name = header.fields[i];
        if (i == 0 && name.size() >= 3 && static_cast<unsigned char>(name[0]) == 0xEF) name = name.substr(3);
        idx[name] = i;
    }
    for (const auto& r : required) {
        if (!idx.count(r)) throw CsvError(file + ": missing required column '" + r + "'");
    }
    return idx;
}

struct RowContext {
    const std::string& file;
    const csv::Record& rec;
    const std::map<std::string, std::size_t>& idx;

    const std::string& field(const std::string& name) const { return rec.fields[idx.at(name)]; }

    long long integer(const std::string& name) const {
        auto v = csv::parse_int(field(name));
        if (!v) throw RowError{file, rec.line, "column '" + name + "': cannot parse integer '" + field(name) + "'"};
        return *v;
    }
    double real(const std::string& name, bool allow_empty) const {
        const auto& s = field(name);
        if (s.empty() && allow_empty) return kMissing;
        auto v = csv::parse_double(s);
        if (!v) throw RowError{file, rec.line, "column '" + name + "': cannot parse number '" + s + "'"};
        return *v;
    }
};

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError("cannot open '" + path + "'");
    return in;
}

GroupTag parse_tag(const std::string& s, const RowContext& ctx) {
    if (s.empty()) return GroupTag::none;
    if (s == "young") return GroupTag::young;
    if (s == "old") return GroupTag::old;
    throw RowError{ctx.file, ctx.rec.line, "group_tag must be young, old or empty"};
}

}  // namespace

LoadResult load_csv(const std::string& persons_path, const std::string& incomes_path, const CsvOptions& opt) {
    LoadResult result;
    auto fail_or_record = [&](RowError e) {
        if (opt.strict) throw CsvError(e.file + ":" + std::to_string(e.line) + ": " + e.message);
        result.errors.push_back(std::move(e));
    };

    // ---- persons
    std::vector<PersonRecord> persons;
    std::map<std::string, std::size_t> person_line;
    {
        auto in = open_in(persons_path);
        csv::Reader reader(in);
        csv::Record header;
        if (!reader.next(header)) throw CsvError(persons_path + ": empty file");
        const std::vector<std::string> required = {"person_id", "family_id", "cohort", "sex",
                                                   "educ_group", "parent_educ_group", "parent_log_income"};
        auto idx = header_index(header, persons_path, required);
        csv::Record rec;
        while (reader.next(rec)) {
            if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;
            RowContext ctx{persons_path, rec, idx};
            try {
                if (rec.fields.size() != header.fields.size()) {
                    throw RowError{persons_path, rec.line,
                                   "expected " + std::to_string(header.fields.size()) + " fields, got " +
                                       std::to_string(rec.fields.size())};
                }
                PersonRecord r;
                r.person_id = ctx.field("person_id");
                if (r.person_id.empty()) throw RowError{persons_path, rec.line, "empty person_id"};
                r.family_id = ctx.field("family_id");
                r.cohort = static_cast<int>(ctx.integer("cohort"));
                r.sex = static_cast<int>(ctx.integer("sex"));
                r.educ_group = static_cast<int>(ctx.integer("educ_group"));
                r.parent_educ_group = static_cast<int>(ctx.integer("parent_educ_group"));
                r.parent_log_income = ctx.real("parent_log_income", true);
                if (idx.count("true_log_lifetime")) {
                    double t = ctx.real("true_log_lifetime", true);
                    if (!std::isnan(t)) r.true_log_lifetime = t;
                }
                if (idx.count("group_tag")) r.group_tag = parse_tag(ctx.field("group_tag"), ctx);
                for (std::size_t e = 0; e < kExtraCount; ++e) {
                    std::string name(kExtraNames[e]);
                    if (idx.count(name)) r.extras[e] = ctx.real(name, true);
                }
                auto [it, inserted] = person_line.emplace(r.person_id, rec.line);
                if (!inserted) {
                    throw CsvError(persons_path + ": duplicate person_id '" + r.person_id + "' on lines " +
                                   std::to_string(it->second) + " and " + std::to_string(rec.line));
                }
                persons.push_back(std::move(r));
            } catch (RowError& e) {
                fail_or_record(std::move(e));
            }
        }
    }
    std::map<std::string, std::size_t> person_index;
    for (std::size_t i = 0; i < persons.size(); ++i) person_index[persons[i].person_id] = i;

    // ---- incomes
    std::vector<IncomeObs> obs;
    {
        auto in = open_in(incomes_path);
        csv::Reader reader(in);
        csv::Record header;
        if (!reader.next(header)) throw CsvError(incomes_path + ": empty file");
        auto idx = header_index(header, incomes_path, {"person_id", "year", "age", "income_level"});
        std::map<std::pair<std::size_t, int>, std::size_t> seen;
        csv::Record rec;
        while (reader.next(rec)) {
            if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;
            RowContext ctx{incomes_path, rec, idx};
            try {
                if (rec.fields.size() != header.fields.size()) {
                    throw RowError{incomes_path, rec.line,
                                   "expected " + std::to_string(header.fields.size()) + " fields, got " +
                                       std::to_string(rec.fields.size())};
                }
                const auto& pid = ctx.field("person_id");
                auto it = person_index.find(pid);
                if (it == person_index.end()) throw RowError{incomes_path, rec.line, "unknown person_id '" + pid + "'"};
                IncomeObs o;
                o.person = it->second;
                o.year = static_cast<int>(ctx.integer("year"));
                o.age = static_cast<int>(ctx.integer("age"));
                o.income_level = ctx.real("income_level", false);
                if (!(o.income_level >= 0.0) || !std::isfinite(o.income_level)) {
                    throw RowError{incomes_path, rec.line, "income_level must be finite and >= 0"};
                }
                if ((opt.age_min && o.age < *opt.age_min) || (opt.age_max && o.age > *opt.age_max)) {
                    throw RowError{incomes_path, rec.line, "age " + std::to_string(o.age) + " outside declared bounds"};
                }
                auto [sit, inserted] = seen.emplace(std::make_pair(o.person, o.age), rec.line);
                if (!inserted) {
                    throw CsvError(incomes_path + ": duplicate (person_id, age) = (" + pid + ", " +
                                   std::to_string(o.age) + ") on lines " + std::to_string(sit->second) + " and " +
                                   std::to_string(rec.line));
                }
                obs.push_back(o);
            } catch (RowError& e) {
                fail_or_record(std::move(e));
            }
        }
    }

    PanelMetadata meta;
    int lo = 1 << 30, hi = -(1 << 30);
    for (const auto& o : obs) {
        lo = std::min(lo, o.age);
        hi = std::max(hi, o.age);
    }
    if (obs.empty()) lo = hi = 0;
    meta.age_min = opt.age_min.value_or(lo);
    meta.age_max = opt.age_max.value_or(hi);
    int ge = 0, gp = 0;
    for (const auto& r : persons) {
        ge = std::max(ge, r.educ_group + 1);
        gp = std::max(gp, r.parent_educ_group + 1);
    }
    meta.n_educ_groups = opt.n_educ_groups > 0 ? opt.n_educ_groups : std::max(ge, 1);
    meta.n_parent_educ_groups = opt.n_parent_educ_groups > 0 ? opt.n_parent_educ_groups : std::max(gp, 1);
    meta.provenance.push_back("load_csv(" + persons_path + ", " + incomes_path + ")");
    try {
        result.panel = Panel::create(std::move(persons), std::move(obs), std::move(meta));
    } catch (const std::invalid_argument& e) {
        throw CsvError(std::string("invalid panel: ") + e.what());
    }
    return result;
}

void write_csv(const Panel& p, const std::string& persons_path, const std::string& incomes_path) {
    const auto& persons = p.persons();
    bool has_truth = std::any_of(persons.begin(), persons.end(), [](const auto& r) { return r.true_log_lifetime.has_value(); });
    bool has_tag = std::any_of(persons.begin(), persons.end(), [](const auto& r) { return r.group_tag != GroupTag::none; });
    std::array<bool, kExtraCount> has_extra{};
    for (std::size_t e = 0; e < kExtraCount; ++e) {
        has_extra[e] = std::any_of(persons.begin(), persons.end(), [e](const auto& r) { return !std::isnan(r.extras[e]); });
    }
    {
        std::ofstream out(persons_path, std::ios::binary);
        if (!out) throw CsvError("cannot write '" + persons_path + "'");
        std::vector<std::string> header = {"person_id", "family_id", "cohort", "sex",
                                           "educ_group", "parent_educ_group", "parent_log_income"};
        if (has_truth) header.push_back("true_log_lifetime");
        if (has_tag) header.push_back("group_tag");
        for (std::size_t e = 0; e < kExtraCount; ++e)
            if (has_extra[e]) header.emplace_back(kExtraNames[e]);
        csv::write_row(out, header);
        std::vector<std::string> row;
        for (const auto& r : persons) {
            row = {r.person_id, r.family_id, std::to_string(r.cohort), std::to_string(r.sex),
                   std::to_string(r.educ_group), std::to_string(r.parent_educ_group), csv::format_double(r.parent_log_income)};
            if (has_truth) row.push_back(r.true_log_lifetime ? csv::format_double(*r.true_log_lifetime) : "");
            if (has_tag) row.push_back(r.group_tag == GroupTag::young ? "young" : r.group_tag == GroupTag::old ? "old" : "");
            for (std::size_t e = 0; e < kExtraCount; ++e)
                if (has_extra[e]) row.push_back(csv::format_double(r.extras[e]));
            csv::write_row(out, row);
        }
    }
    {
        std::ofstream out(incomes_path, std::ios::binary);
        if (!out) throw CsvError("cannot write '" + incomes_path + "'");
        csv::write_row(out, {"person_id", "year", "age", "income_level"});
        for (const auto& o : p.observations()) {
            csv::write_row(out, {persons[o.person].person_id, std::to_string(o.year), std::to_string(o.age),
                                 csv::format_double(o.income_level)});
        }
    }
}

}  // namespace mobilab::panel
