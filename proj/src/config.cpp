#include "bat/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace bat {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& text) {
    // Allow "8/255" style fractions for eps and step sizes.
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
        return to_double(key, trim(text.substr(0, slash))) / to_double(key, trim(text.substr(slash + 1)));
    }
    double v = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
    return v;
}

long to_long(const std::string& key, const std::string& text) {
    long v = 0;
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), last, v);
    if (ec != std::errc() || ptr != last) throw ConfigError("config key '" + key + "': '" + text + "' is not an integer");
    return v;
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // Prefer the shortest representation that round-trips.
    for (int precision = 1; precision <= 17; ++precision) {
        char shorter[64];
        std::snprintf(shorter, sizeof shorter, "%.*g", precision, v);
        if (std::strtod(shorter, nullptr) == v) return shorter;
    }
    return buf;
}

FlatConfig FlatConfig::parse(std::string_view text) {
    FlatConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'section.key = value'");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty() || key.find('.') == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' is not section.key");
        }
        cfg.set(key, value);
    }
    return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str());
}

void FlatConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::optional<std::string> FlatConfig::get(const std::string& key) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? to_double(key, *v) : fallback;
}

long FlatConfig::get_int(const std::string& key, long fallback) const {
    const auto v = get(key);
    return v ? to_long(key, *v) : fallback;
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("config key '" + key + "': '" + *v + "' is not a boolean");
}

std::vector<std::size_t> FlatConfig::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::vector<std::size_t> out;
    for (const auto& item : split(*v, ',')) {
        const long n = to_long(key, item);
        if (n < 0) throw ConfigError("config key '" + key + "': negative size");
        out.push_back(static_cast<std::size_t>(n));
    }
    return out;
}

std::vector<std::string> FlatConfig::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        if (!used_.count(k)) out.push_back(k);
    }
    return out;
}

std::pair<Dataset, Dataset> make_datasets(const DataConfig& cfg) {
    if (cfg.kind == "two_moons") {
        return {gen_two_moons(cfg.n, cfg.noise, cfg.seed), gen_two_moons(cfg.eval_n, cfg.noise, cfg.eval_seed)};
    }
    if (cfg.kind == "blobs") {
        const std::vector<std::vector<double>> centers{{-1.0, 0.0}, {1.0, 0.0}};
        return {gen_gaussian_blobs(cfg.n, centers, cfg.sigma, cfg.seed),
                gen_gaussian_blobs(cfg.eval_n, centers, cfg.sigma, cfg.eval_seed)};
    }
    if (cfg.kind == "idx") {
        if (cfg.images.empty() || cfg.labels.empty()) throw ConfigError("data.kind = idx needs data.images and data.labels");
        Dataset train = load_idx(cfg.images, cfg.labels, cfg.limit);
        Dataset eval = cfg.eval_images.empty() ? train.head(cfg.eval_limit)
                                               : load_idx(cfg.eval_images, cfg.eval_labels, cfg.eval_limit);
        return {std::move(train), std::move(eval)};
    }
    throw ConfigError("unknown data.kind '" + cfg.kind + "' (expected two_moons, blobs or idx)");
}

namespace {

AttackConfig read_attack(const FlatConfig& cfg, const std::string& section, AttackConfig base) {
    const auto key = [&](const char* k) { return section + "." + k; };
    base.eps = cfg.get_double(key("eps"), base.eps);
    base.step = cfg.get_double(key("step"), cfg.has(key("eps")) && !cfg.has(key("step")) ? base.eps / 4.0 : base.step);
    base.iters = static_cast<int>(cfg.get_int(key("iters"), base.iters));
    if (const auto v = cfg.get(key("interp"))) {
        if (*v == "none" || v->empty()) {
            base.interp.reset();
        } else {
            base.interp = static_cast<int>(cfg.get_int(key("interp"), 0));
        }
    }
    if (const auto v = cfg.get(key("inner_loss"))) base.inner_loss = parse_inner_loss(*v);
    base.restarts = static_cast<int>(cfg.get_int(key("restarts"), base.restarts));
    base.rand_init_scale = cfg.get_double(key("rand_init_scale"), base.rand_init_scale);
    base.box_lo = cfg.get_double(key("box_lo"), base.box_lo);
    base.box_hi = cfg.get_double(key("box_hi"), base.box_hi);
    return base;
}

std::vector<Milestone> read_milestones(const FlatConfig& cfg, const std::vector<Milestone>& fallback) {
    const auto v = cfg.get("train.milestones");
    if (!v) return fallback;
    std::vector<Milestone> out;
    for (const auto& item : split(*v, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("train.milestones entries must be epoch:factor");
        out.push_back({static_cast<int>(to_long("train.milestones", trim(item.substr(0, colon)))),
                       to_double("train.milestones", trim(item.substr(colon + 1)))});
    }
    return out;
}

}  // namespace

ExperimentConfig experiment_from_config(const FlatConfig& cfg) {
    ExperimentConfig out;
    out.source = cfg;
    try {
        auto& d = out.data;
        d.kind = cfg.get_string("data.kind", d.kind);
        d.n = static_cast<std::size_t>(cfg.get_int("data.n", static_cast<long>(d.n)));
        d.eval_n = static_cast<std::size_t>(cfg.get_int("data.eval_n", static_cast<long>(d.eval_n)));
        d.noise = cfg.get_double("data.noise", d.noise);
        d.sigma = cfg.get_double("data.sigma", d.sigma);
        d.seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", static_cast<long>(d.seed)));
        d.eval_seed = static_cast<std::uint64_t>(cfg.get_int("data.eval_seed", static_cast<long>(d.eval_seed)));
        d.images = cfg.get_string("data.images", d.images);
        d.labels = cfg.get_string("data.labels", d.labels);
        d.eval_images = cfg.get_string("data.eval_images", d.eval_images);
        d.eval_labels = cfg.get_string("data.eval_labels", d.eval_labels);
        d.limit = static_cast<std::size_t>(cfg.get_int("data.limit", static_cast<long>(d.limit)));
        d.eval_limit = static_cast<std::size_t>(cfg.get_int("data.eval_limit", static_cast<long>(d.eval_limit)));
        const bool image = d.kind == "idx";

        auto& net = out.network;
        net.input_dim = image ? 784 : 2;
        net.input_dim = static_cast<std::size_t>(cfg.get_int("model.input_dim", static_cast<long>(net.input_dim)));
        net.hidden = cfg.get_sizes("model.hidden", {32, 32});
        net.classes = static_cast<std::size_t>(cfg.get_int("model.classes", image ? 10 : 2));
        net.activation = parse_activation(cfg.get_string("model.activation", "relu"));

        ObjectiveSpec obj;
        obj.variant = parse_variant(cfg.get_string("objective.variant", "trades"));
        obj.psi = parse_psi(cfg.get_string("objective.psi", "neg_entropy"));
        obj.lambda = cfg.get_double("objective.lambda", obj.variant == Variant::PgdAt ? 0.0 : 9.0);
        const bool mer = obj.uses_mer();
        obj.beta_cle = cfg.get_double("objective.beta_cle", mer ? 1.0 : 0.0);
        obj.beta_adv = cfg.get_double("objective.beta_adv", 0.0);

        TrainConfig& t = out.train;
        t.objective = obj;
        t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
        t.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch_size", static_cast<long>(t.batch_size)));
        t.base_lr = cfg.get_double("train.lr", t.base_lr);
        t.momentum = cfg.get_double("train.momentum", t.momentum);
        t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
        t.warmup_epochs = static_cast<int>(cfg.get_int("train.warmup_epochs", t.warmup_epochs));
        t.milestones = read_milestones(cfg, t.milestones);
        t.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
        t.log_interp = static_cast<int>(cfg.get_int("train.log_interp", t.log_interp));
        t.record_wall_time = cfg.get_bool("train.wall_time", false);

        AttackConfig base = image ? AttackConfig::image_default() : AttackConfig::synthetic_default();
        base.inner_loss = default_inner_loss(obj);
        t.attack = read_attack(cfg, "attack", base);

        AttackConfig eval_base = base;
        eval_base.interp.reset();
        eval_base.inner_loss = InnerLoss::CE;
        eval_base.eps = t.attack.eps;
        eval_base.step = t.attack.step;
        eval_base.box_lo = t.attack.box_lo;
        eval_base.box_hi = t.attack.box_hi;
        eval_base.iters = 20;
        eval_base.restarts = 1;
        t.eval_attack = read_attack(cfg, "eval_attack", eval_base);

        AttackConfig final_base = t.eval_attack;
        final_base.iters = 100;
        final_base.restarts = 5;
        out.final_attack = read_attack(cfg, "final_attack", final_base);

        const auto unused = cfg.unused_keys();
        if (!unused.empty()) {
            std::string list;
            for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
            throw ConfigError("unknown config keys: " + list);
        }
        out.network.validate();
        t.validate();
        out.final_attack.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return out;
}

std::map<std::string, std::string> echo_config(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> e;
    const auto& d = cfg.data;
    e["data.kind"] = d.kind;
    if (d.kind == "idx") {
        e["data.images"] = d.images;
        e["data.labels"] = d.labels;
        e["data.eval_images"] = d.eval_images;
        e["data.eval_labels"] = d.eval_labels;
        e["data.limit"] = std::to_string(d.limit);
        e["data.eval_limit"] = std::to_string(d.eval_limit);
    } else {
        e["data.n"] = std::to_string(d.n);
        e["data.eval_n"] = std::to_string(d.eval_n);
        e["data.seed"] = std::to_string(d.seed);
        e["data.eval_seed"] = std::to_string(d.eval_seed);
        e[d.kind == "blobs" ? "data.sigma" : "data.noise"] = format_number(d.kind == "blobs" ? d.sigma : d.noise);
    }
    std::string hidden;
    for (auto w : cfg.network.hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(w);
    e["model.input_dim"] = std::to_string(cfg.network.input_dim);
    e["model.hidden"] = hidden;
    e["model.classes"] = std::to_string(cfg.network.classes);
    e["model.activation"] = to_string(cfg.network.activation);

    const auto& t = cfg.train;
    e["objective.variant"] = to_string(t.objective.variant);
    e["objective.psi"] = to_string(t.objective.psi);
    e["objective.lambda"] = format_number(t.objective.lambda);
    e["objective.beta_cle"] = format_number(t.objective.beta_cle);
    e["objective.beta_adv"] = format_number(t.objective.beta_adv);
    e["train.epochs"] = std::to_string(t.epochs);
    e["train.batch_size"] = std::to_string(t.batch_size);
    e["train.lr"] = format_number(t.base_lr);
    e["train.momentum"] = format_number(t.momentum);
    e["train.weight_decay"] = format_number(t.weight_decay);
    e["train.warmup_epochs"] = std::to_string(t.warmup_epochs);
    std::string ms;
    for (const auto& m : t.milestones) ms += (ms.empty() ? "" : ",") + std::to_string(m.epoch) + ":" + format_number(m.factor);
    e["train.milestones"] = ms;
    e["train.seed"] = std::to_string(t.seed);
    e["train.log_interp"] = std::to_string(t.log_interp);
    e["train.wall_time"] = t.record_wall_time ? "true" : "false";

    const auto put_attack = [&](const std::string& section, const AttackConfig& a) {
        e[section + ".eps"] = format_number(a.eps);
        e[section + ".step"] = format_number(a.step);
        e[section + ".iters"] = std::to_string(a.iters);
        e[section + ".interp"] = a.interp ? std::to_string(*a.interp) : "none";
        e[section + ".inner_loss"] = to_string(a.inner_loss);
        e[section + ".restarts"] = std::to_string(a.restarts);
        e[section + ".rand_init_scale"] = format_number(a.rand_init_scale);
        e[section + ".box_lo"] = format_number(a.box_lo);
        e[section + ".box_hi"] = format_number(a.box_hi);
    };
    put_attack("attack", t.attack);
    put_attack("eval_attack", t.eval_attack);
    put_attack("final_attack", cfg.final_attack);
    return e;
}

}  // namespace bat
