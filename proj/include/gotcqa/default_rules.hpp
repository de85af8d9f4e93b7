#pragma once

#include <string_view>

namespace gotcqa {

// Bar-chart question templates spanning structural (S), data retrieval (D)
// and reasoning (R) questions. Node contents follow the symbolic executor's
// micro-syntax (see synth.hpp).
inline constexpr std::string_view kDefaultRules = R"RULES(
# ---- structural understanding ------------------------------------------
rule R-STRUCT-LEGEND        | S | where does the legend appear in the graph | legend_position
rule R-STRUCT-LEGEND-COUNT  | S | how many legend labels are there | legend_count
rule R-STRUCT-TITLE         | S | what is the title of the graph | title
rule R-STRUCT-XLABEL        | S | what is the label of the x axis | x_label
rule R-STRUCT-YLABEL        | S | what is the label of the y axis | y_label
rule R-STRUCT-BARS          | S | how many bars are there in the graph | bar_count

# ---- data retrieval ------------------------------------------------------
rule R-DATA-VALUE           | D | what is the {LABEL} of {ENT} | lookup
rule R-DATA-HOWMANY         | D | how many {LABEL} does {ENT} have | lookup
rule R-DATA-VALUE-YEAR      | D | what is the {LABEL} of {ENT} in {YEAR} | lookup_year
rule R-DATA-GT-CONST        | D | is the {LABEL} of {ENT} greater than {NUM} | greater_than_const

# ---- reasoning -------------------------------------------------------------
rule R-REASON-MORE          | R | how many more {LABEL} of {ENT} than of {ENT2} | pair_difference
rule R-REASON-DIFF          | R | what is the difference between {ENT} and {ENT2} | pair_difference
rule R-REASON-SUM2          | R | what is the sum of {ENT} and {ENT2} | pair_sum
rule R-REASON-RATIO         | R | what is the ratio between {ENT} and {ENT2} | pair_ratio
rule R-REASON-GT            | R | is the {LABEL} of {ENT} greater than that of {ENT2} | pair_greater
rule R-REASON-LT            | R | is the {LABEL} of {ENT} less than that of {ENT2} | pair_less
rule R-REASON-EQ            | R | is the {LABEL} of {ENT} equal to that of {ENT2} | pair_equal
rule R-REASON-ABOVE-AVG     | R | are the number of {LABEL} of {ENT} more than the average {LABEL} | above_average
rule R-REASON-AVG           | R | what is the average {LABEL} | all_average
rule R-REASON-MAX           | R | what is the highest {LABEL} | all_maximum
rule R-REASON-MIN           | R | what is the lowest {LABEL} | all_minimum
rule R-REASON-AGG           | R | what is the {AGG} of all values | all_aggregate
rule R-REASON-BELOW         | R | how many values are below {NUM} | count_below
rule R-REASON-ABOVE         | R | how many values are above {NUM} | count_above
rule R-REASON-TOTAL-YEAR    | R | what is the total {LABEL} in {YEAR} | year_total

# ---- skeletons ---------------------------------------------------------------
skeleton legend_position
{"nodes": [{"id": 1, "type": "Loc", "content": "locate legend"}], "edges": []}
end

skeleton legend_count
{"nodes": [{"id": 1, "type": "Loc", "content": "locate legend"},
           {"id": 2, "type": "Num", "content": "number of entries"}],
 "edges": [[1, 2]]}
end

skeleton title
{"nodes": [{"id": 1, "type": "Loc", "content": "locate title"}], "edges": []}
end

skeleton x_label
{"nodes": [{"id": 1, "type": "Loc", "content": "locate x axis"}], "edges": []}
end

skeleton y_label
{"nodes": [{"id": 1, "type": "Loc", "content": "locate y axis"}], "edges": []}
end

skeleton bar_count
{"nodes": [{"id": 1, "type": "Loc", "content": "locate all bars"},
           {"id": 2, "type": "Num", "content": "number of bars"}],
 "edges": [[1, 2]]}
end

skeleton lookup
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Num", "content": "value of {ENT}"}],
 "edges": [[1, 2]]}
end

skeleton lookup_year
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT} in {YEAR}"},
           {"id": 2, "type": "Num", "content": "value of {ENT} in {YEAR}"}],
 "edges": [[1, 2]]}
end

skeleton greater_than_const
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Num", "content": "value of {ENT}"},
           {"id": 3, "type": "Log", "content": "greater than {NUM}"}],
 "edges": [[1, 2], [2, 3]]}
end

skeleton pair_difference
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate {ENT2}"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "value of {ENT2}"},
           {"id": 5, "type": "Log", "content": "difference"}],
 "edges": [[1, 3], [2, 4], [3, 5], [4, 5]]}
end

skeleton pair_sum
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate {ENT2}"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "value of {ENT2}"},
           {"id": 5, "type": "Log", "content": "sum"}],
 "edges": [[1, 3], [2, 4], [3, 5], [4, 5]]}
end

skeleton pair_ratio
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate {ENT2}"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "value of {ENT2}"},
           {"id": 5, "type": "Log", "content": "ratio"}],
 "edges": [[1, 3], [2, 4], [3, 5], [4, 5]]}
end

skeleton pair_greater
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate {ENT2}"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "value of {ENT2}"},
           {"id": 5, "type": "Log", "content": "greater"}],
 "edges": [[1, 3], [2, 4], [3, 5], [4, 5]]}
end

skeleton pair_less
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate {ENT2}"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "value of {ENT2}"},
           {"id": 5, "type": "Log", "content": "less"}],
 "edges": [[1, 3], [2, 4], [3, 5], [4, 5]]}
end

skeleton pair_equal
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate {ENT2}"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "value of {ENT2}"},
           {"id": 5, "type": "Log", "content": "equal"}],
 "edges": [[1, 3], [2, 4], [3, 5], [4, 5]]}
end

skeleton above_average
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate all bars"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "values of all bars"},
           {"id": 5, "type": "Log", "content": "average"},
           {"id": 6, "type": "Log", "content": "greater"}],
 "edges": [[1, 3], [2, 4], [4, 5], [3, 6], [5, 6]]}
end

skeleton all_average
{"nodes": [{"id": 1, "type": "Loc", "content": "locate all bars"},
           {"id": 2, "type": "Num", "content": "values of all bars"},
           {"id": 3, "type": "Log", "content": "average"}],
 "edges": [[1, 2], [2, 3]]}
end

skeleton all_maximum
{"nodes": [{"id": 1, "type": "Loc", "content": "locate all bars"},
           {"id": 2, "type": "Num", "content": "values of all bars"},
           {"id": 3, "type": "Log", "content": "maximum"}],
 "edges": [[1, 2], [2, 3]]}
end

skeleton all_minimum
{"nodes": [{"id": 1, "type": "Loc", "content": "locate all bars"},
           {"id": 2, "type": "Num", "content": "values of all bars"},
           {"id": 3, "type": "Log", "content": "minimum"}],
 "edges": [[1, 2], [2, 3]]}
end

skeleton all_aggregate
{"nodes": [{"id": 1, "type": "Loc", "content": "locate all bars"},
           {"id": 2, "type": "Num", "content": "values of all bars"},
           {"id": 3, "type": "Log", "content": "{AGG}"}],
 "edges": [[1, 2], [2, 3]]}
end

skeleton count_below
{"nodes": [{"id": 1, "type": "Loc", "content": "locate all bars"},
           {"id": 2, "type": "Num", "content": "values of all bars"},
           {"id": 3, "type": "Log", "content": "count below {NUM}"}],
 "edges": [[1, 2], [2, 3]]}
end

skeleton count_above
{"nodes": [{"id": 1, "type": "Loc", "content": "locate all bars"},
           {"id": 2, "type": "Num", "content": "values of all bars"},
           {"id": 3, "type": "Log", "content": "count above {NUM}"}],
 "edges": [[1, 2], [2, 3]]}
end

skeleton year_total
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {YEAR}"},
           {"id": 2, "type": "Num", "content": "values in {YEAR}"},
           {"id": 3, "type": "Log", "content": "total"}],
 "edges": [[1, 2], [2, 3]]}
end
)RULES";

}  // namespace gotcqa
