#pragma once

// Reader for tests/fixtures/reference_table.tsv (row, train %, validation %).

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fixture {

struct Row {
    std::string row;
    std::optional<std::string> train;
    std::string validation;
};

inline std::vector<Row> reference_rows(const std::string& path) {
    std::ifstream is(path);
    std::vector<Row> out;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Row r;
        std::string train;
        std::getline(ls, r.row, '\t');
        std::getline(ls, train, '\t');
        std::getline(ls, r.validation, '\t');
        if (train != "-") r.train = train;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace fixture
