#include "tstr/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "tstr/error.hpp"
#include "tstr/rng.hpp"

namespace tstr {
namespace {

struct TaskDef {
  std::string_view code;
  std::array<std::string_view, 4> phrases;  // first two are the train phrasings
};

// Slots: {a} and {b} distinct columns, {n} number, {s} text value, {t} table.
constexpr std::array<TaskDef, kSynthTaskTypes> kTasks{{
    {"Table.SelectRows(Source, each [{a}] > {n})",
     {"filter rows where {a} is greater than {n}", "keep rows whose {a} exceeds {n}",
      "filter down to rows having {a} above {n}", "only rows with {a} bigger than {n} please"}},
    {"Table.SelectRows(Source, each [{a}] = \"{s}\")",
     {"filter rows where {a} equals {s}", "keep rows whose {a} is exactly {s}",
      "filter to the rows where {a} matches {s}", "only rows with {a} set to {s}"}},
    {"Table.Sort(Source, {{\"{a}\", Order.Ascending}})",
     {"sort the table by {a} ascending", "sort rows by {a} from low to high",
      "order everything by {a}, ascending sort", "sort {a} smallest first"}},
    {"Table.Sort(Source, {{\"{a}\", Order.Descending}})",
     {"sort the table by {a} descending", "sort rows by {a} from high to low",
      "order everything by {a}, descending sort", "sort {a} largest first"}},
    {"Table.RemoveColumns(Source, {\"{a}\", \"{b}\"})",
     {"remove the columns {a} and {b}", "delete columns {a} and {b}",
      "get rid of the {a} and {b} columns, remove them", "remove {a} plus {b} from the columns"}},
    {"Table.RenameColumns(Source, {{\"{a}\", \"{s}\"}})",
     {"rename column {a} to {s}", "give the column {a} the new name {s}",
      "rename the {a} header so it reads {s}", "column {a} should be renamed {s}"}},
    {"Table.SplitColumn(Source, \"{a}\", Splitter.SplitTextByDelimiter(\",\", QuoteStyle.Csv), {\"{a}.1\", \"{a}.2\"})",
     {"split column {a} at each comma", "split the {a} text by the comma delimiter",
      "break {a} into two columns, split on commas", "comma split of {a}"}},
    {"Table.Group(Source, {\"{a}\"}, {{\"Total\", each List.Sum([{b}]), type number}})",
     {"group by {a} and sum {b}", "total {b} for each {a} group",
      "group rows on {a}, summing up {b}", "sum of {b} grouped per {a}"}},
    {"Table.Group(Source, {\"{a}\"}, {{\"Count\", each Table.RowCount(_), Int64.Type}})",
     {"count rows per {a}", "count how many rows each {a} has",
      "group on {a} and count the rows", "row count for every {a}"}},
    {"Table.AddColumn(Source, \"{s}\", each [{a}] * {n})",
     {"add a column {s} equal to {a} times {n}", "add a new column {s} that multiplies {a} by {n}",
      "multiply {a} by {n} into an added column {s}", "new column {s} = {a} multiplied by {n}"}},
    {"Table.Distinct(Source, {\"{a}\"})",
     {"remove duplicate rows based on {a}", "drop duplicates in {a}",
      "deduplicate the rows using {a}, remove duplicates", "unique {a} only, no duplicate rows"}},
    {"Table.FirstN(Source, {n})",
     {"keep the first {n} rows", "take only the top {n} rows",
      "keep rows 1 to {n}, the first ones", "first {n} rows only"}},
    {"Table.TransformColumnTypes(Source, {{\"{a}\", type number}})",
     {"change the type of {a} to number", "convert the data type of {a} into a number type",
      "make {a} a numeric type column", "set type number on {a}"}},
    {"Table.ReplaceValue(Source, \"{s}\", \"\", Replacer.ReplaceText, {\"{a}\"})",
     {"replace {s} with blank in {a}", "replace every {s} inside {a} by an empty value",
      "in {a}, blank out and replace the text {s}", "replace {s} with nothing in column {a}"}},
    {"Table.FillDown(Source, {\"{a}\"})",
     {"fill down the {a} column", "fill empty {a} cells down from above",
      "fill down values in {a}", "{a} needs a fill down"}},
    {"Table.UnpivotOtherColumns(Source, {\"{a}\"}, \"Attribute\", \"Value\")",
     {"unpivot all columns except {a}", "unpivot the other columns keeping {a}",
      "keep {a} and unpivot everything else", "unpivot every column but {a}"}},
    {"Table.Pivot(Source, List.Distinct(Source[{a}]), \"{a}\", \"{b}\", List.Sum)",
     {"pivot {a} using {b} as values", "pivot the {a} column with {b} summed as values",
      "pivot table: {a} across, {b} as the values", "pivot on {a}, values from {b}"}},
    {"Table.NestedJoin(Source, {\"{a}\"}, #\"{t}\", {\"{a}\"}, \"{t}\", JoinKind.LeftOuter)",
     {"merge with the {t} table on {a}", "join {t} onto this table by {a}",
      "left join against {t}, matching on {a}", "merge in {t} using the {a} key"}},
    {"Table.Combine({Source, #\"{t}\"})",
     {"append the {t} table", "append rows from {t} below this table",
      "combine this with {t} by appending", "stack {t} underneath, append it"}},
    {"Table.AddIndexColumn(Source, \"Index\", {n}, 1, Int64.Type)",
     {"add an index column starting at {n}", "add an index that counts up from {n}",
      "number the rows with an index column from {n}", "index column beginning at {n}"}},
    {"Table.TransformColumns(Source, {{\"{a}\", Text.Upper, type text}})",
     {"convert {a} to upper case", "make all {a} text uppercase",
      "uppercase the values of {a}", "{a} in capital letters, upper case"}},
    {"Table.SelectColumns(Source, {\"{a}\", \"{b}\"})",
     {"keep only the columns {a} and {b}", "select just columns {a} and {b}",
      "select the {a} and {b} columns and drop the rest", "only columns {a} and {b} should stay"}},
    {"Table.Skip(Source, {n})",
     {"skip the first {n} rows", "skip over the top {n} rows",
      "ignore and skip {n} leading rows", "skip {n} rows at the start"}},
    {"Table.LastN(Source, {n})",
     {"keep the last {n} rows", "take only the bottom {n} rows",
      "keep the final {n} rows, the last ones", "last {n} rows only"}},
    {"Table.TransformColumns(Source, {{\"{a}\", each Number.Round(_, {n}), type number}})",
     {"round {a} to {n} decimals", "round the numbers in {a} to {n} decimal places",
      "round off {a} with {n} digits", "{a} rounded to {n} decimals"}},
}};

struct Style {
  std::string_view prefix;
  std::string_view suffix;
};

constexpr std::array<Style, 6> kStyles{{
    {"Hello team, quick question from the quarterly finance dashboard workstream that Margaret asked me to "
     "look into before Friday: ",
     ". Thanks so much in advance, really appreciate the help with the finance dashboard!"},
    {"URGENT!!! boss wants the weekly warehouse inventory spreadsheet cleaned up asap and i am totally stuck, "
     "somebody pls ",
     " !!! asap asap, warehouse inventory spreadsheet is due tonight!!!"},
    {"In the attached workbook (customer_master_v7.xlsx, sheet Staging), as part of the migration checklist "
     "item 4.2, we need to ",
     "; see the migration checklist and the customer_master_v7 workbook for context."},
    {"as discussed yesterday during the analytics guild standup meeting with the marketing crew, could "
     "someone ",
     " before the next analytics guild standup? cheers from the marketing crew"},
    {"Power Query beginner here, sorry if this is an obvious question, I watched three tutorials on "
     "youtube already but I want to ",
     ", any pointers for a total beginner would be lovely, thank you kindly :)"},
    {"Per the ticket DATA-1187 raised by operations regarding the nightly supplier feed import job, "
     "engineering should ",
     " so the nightly supplier feed import job stops failing. Ticket DATA-1187, operations."},
}};

constexpr std::array<std::string_view, 12> kColumns{"Sales",    "Region",   "Price",   "Quantity",
                                                     "Customer", "OrderDate", "Category", "Product",
                                                     "Country",  "Status",   "Amount",  "Discount"};
constexpr std::array<std::string_view, 8> kValues{"North", "Pending", "N/A",   "Total",
                                                  "Closed", "Widget", "Unknown", "Net"};
constexpr std::array<std::string_view, 5> kTables{"Customers", "Orders", "Lookup", "Targets", "Suppliers"};

std::string fill(std::string_view tmpl, std::string_view a, std::string_view b, std::string_view num,
                 std::string_view s, std::string_view t) {
  std::string out;
  out.reserve(tmpl.size() + 32);
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
      std::string_view v;
      switch (tmpl[i + 1]) {
        case 'a': v = a; break;
        case 'b': v = b; break;
        case 'n': v = num; break;
        case 's': v = s; break;
        case 't': v = t; break;
        default: out += tmpl[i]; continue;
      }
      out += v;
      i += 2;
    } else {
      out += tmpl[i];
    }
  }
  return out;
}

std::size_t effective_tasks(std::size_t n, std::size_t task_types) {
  return std::clamp<std::size_t>(std::min(task_types, n / 4), 2, kSynthTaskTypes);
}

struct Plan {
  std::vector<std::size_t> order;  // output position -> generation index
  std::vector<SynthLabel> labels;  // by generation index
  Rng rng;
};

// Factors are drawn first so synth_label can reproduce them without texts.
Plan plan(std::size_t n, std::uint64_t seed, std::size_t task_types) {
  if (n < 20) throw UsageError("synth needs n >= 20");
  const std::size_t tasks = effective_tasks(n, task_types);
  Plan p{{}, {}, Rng(seed)};
  p.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.labels[i].task = i % tasks;
    p.labels[i].style = p.rng.below(kStyles.size());
  }
  p.order.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.order[i] = i;
  p.rng.shuffle(std::span(p.order));
  return p;
}

}  // namespace

SynthLabel synth_label(std::size_t n, std::uint64_t seed, std::size_t task_types, std::size_t i) {
  Plan p = plan(n, seed, task_types);
  return p.labels.at(p.order.at(i));
}

Corpus synth_corpus(std::size_t n, std::uint64_t seed, std::size_t task_types) {
  Plan p = plan(n, seed, task_types);
  const std::size_t tasks = effective_tasks(n, task_types);
  std::vector<Exemplar> generated(n);
  for (std::size_t g = 0; g < n; ++g) {
    const SynthLabel& lab = p.labels[g];
    const TaskDef& task = kTasks[lab.task];
    const Style& style = kStyles[lab.style];
    // Every fourth member of a task is held out for test.
    const bool test = (g / tasks) % 4 == 3;
    const std::size_t ai = p.rng.below(kColumns.size());
    const std::size_t bi = (ai + 1 + p.rng.below(kColumns.size() - 1)) % kColumns.size();
    const std::string num = std::to_string(1 + p.rng.below(500));
    const std::string_view s = kValues[p.rng.below(kValues.size())];
    const std::string_view t = kTables[p.rng.below(kTables.size())];
    const std::string_view phrase = task.phrases[p.rng.below(test ? 4 : 2)];

    Exemplar& e = generated[g];
    e.code = fill(task.code, kColumns[ai], kColumns[bi], num, s, t);
    e.utterance = std::string(style.prefix) + fill(phrase, kColumns[ai], kColumns[bi], num, s, t) +
                  std::string(style.suffix);
    e.split = test ? Split::test : Split::train;
  }
  std::vector<Exemplar> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Exemplar e = std::move(generated[p.order[i]]);
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%04zu", i);
    e.id = id;
    out.push_back(std::move(e));
  }
  return Corpus(std::move(out));
}

}  // namespace tstr
