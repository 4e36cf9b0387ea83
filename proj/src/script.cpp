#include "ctxdesc/script.hpp"

#include <fstream>
#include <sstream>

namespace ctxdesc {

RtValue RtValue::of(Value v) {
    RtValue r;
    r.kind = Kind::Scalar;
    r.scalar = std::move(v);
    return r;
}

RtValue RtValue::context(ContextRef ref) {
    RtValue r;
    r.kind = Kind::Context;
    r.ctx = std::move(ref);
    return r;
}

namespace {

struct Arg {
    std::optional<std::string> keyword;
    RtValue value;
    Token at;
};

std::string describe(const RtValue& v) {
    switch (v.kind) {
    case RtValue::Kind::Nothing: return "nothing";
    case RtValue::Kind::Scalar: return v.scalar.repr();
    case RtValue::Kind::List: return "a list";
    case RtValue::Kind::Map: return "a map";
    case RtValue::Kind::Context: return "context '" + v.ctx.ident + "'";
    case RtValue::Kind::Forward: return "unknown name '" + v.ident + "'";
    }
    return "?";
}

Node to_node(const RtValue& v, const Lexer& lex, const Token& at) {
    switch (v.kind) {
    case RtValue::Kind::Scalar: return Node::from_value(v.scalar);
    case RtValue::Kind::List: {
        Node n = Node::list();
        for (const auto& i : v.items) n.push_back(to_node(i, lex, at));
        return n;
    }
    case RtValue::Kind::Map: {
        Node n = Node::map();
        for (std::size_t i = 0; i < v.keys.size(); ++i) n.set(to_node(v.keys[i], lex, at), to_node(v.items[i], lex, at));
        return n;
    }
    default: lex.fail(at, "cannot pass " + describe(v) + " as an argument");
    }
}

}  // namespace

class StatementParser {
public:
    StatementParser(Interpreter& in, std::string_view line, int line_no)
        : in_(in), lex_(line, SourcePos{line_no, 1}) {}

    void run() {
        if (lex_.at_end()) return;
        std::optional<std::string> target;
        if (lex_.peek().kind == TokenKind::Ident) {
            Lexer save = lex_;
            Token name = lex_.next();
            if (lex_.accept("="))
                target = name.text;
            else
                lex_ = save;
        }
        target_ = target;
        RtValue v = expression();
        if (!lex_.at_end()) lex_.fail(lex_.peek(), "unexpected trailing input");
        if (target) in_.vars_[*target] = v;
    }

private:
    Study& study() { return in_.study_; }

    RtValue expression() {
        RtValue v = primary();
        for (;;) {
            if (lex_.accept("[")) {
                Token at = lex_.peek();
                RtValue key = expression();
                lex_.expect("]");
                v = index(v, key, at);
            } else if (lex_.peek().kind == TokenKind::Punct && lex_.peek().text == ".") {
                lex_.next();
                Token name = lex_.next();
                if (name.kind != TokenKind::Ident) lex_.fail(name, "expected a method name");
                lex_.expect("(");
                auto args = arguments();
                v = method(v, name, args);
            } else {
                return v;
            }
        }
    }

    RtValue index(const RtValue& v, const RtValue& key, const Token& at) {
        if (v.kind == RtValue::Kind::Map) {
            for (std::size_t i = 0; i < v.keys.size(); ++i)
                if (v.keys[i].kind == RtValue::Kind::Scalar && key.kind == RtValue::Kind::Scalar &&
                    loosely_equal(v.keys[i].scalar, key.scalar))
                    return v.items[i];
            lex_.fail(at, "key " + describe(key) + " not found");
        }
        if (v.kind == RtValue::Kind::List && key.kind == RtValue::Kind::Scalar && key.scalar.is_int()) {
            auto i = key.scalar.as_int();
            if (i < 0 || static_cast<std::size_t>(i) >= v.items.size()) lex_.fail(at, "index out of range");
            return v.items[static_cast<std::size_t>(i)];
        }
        lex_.fail(at, "cannot index " + describe(v));
    }

    RtValue primary() {
        Token t = lex_.next();
        switch (t.kind) {
        case TokenKind::Int: return RtValue::of(Value(t.ival));
        case TokenKind::Float: return RtValue::of(Value(t.fval));
        case TokenKind::Str: return RtValue::of(Value(t.text));
        case TokenKind::Ident: {
            if (t.text == "None") return RtValue::of(Value());
            if (lex_.accept("(")) return call(t, arguments());
            if (auto it = in_.vars_.find(t.text); it != in_.vars_.end()) return it->second;
            if (auto ref = study().lookup(t.text)) return RtValue::context(*ref);
            RtValue fwd;
            fwd.kind = RtValue::Kind::Forward;
            fwd.ident = t.text;
            return fwd;
        }
        case TokenKind::Punct:
            if (t.text == "[") {
                RtValue l;
                l.kind = RtValue::Kind::List;
                while (!lex_.accept("]")) {
                    l.items.push_back(expression());
                    if (!lex_.accept(",")) {
                        lex_.expect("]");
                        break;
                    }
                }
                return l;
            }
            if (t.text == "{") {
                RtValue m;
                m.kind = RtValue::Kind::Map;
                while (!lex_.accept("}")) {
                    m.keys.push_back(expression());
                    lex_.expect(":");
                    m.items.push_back(expression());
                    if (!lex_.accept(",")) {
                        lex_.expect("}");
                        break;
                    }
                }
                return m;
            }
            lex_.fail(t, "unexpected punctuation");
        case TokenKind::End: lex_.fail(t, "incomplete statement");
        }
        lex_.fail(t, "unexpected token");
    }

    std::vector<Arg> arguments() {
        std::vector<Arg> out;
        while (!lex_.accept(")")) {
            Arg a;
            a.at = lex_.peek();
            if (lex_.peek().kind == TokenKind::Ident) {
                Lexer save = lex_;
                Token name = lex_.next();
                if (lex_.accept("="))
                    a.keyword = name.text;
                else
                    lex_ = save;
            }
            a.value = expression();
            out.push_back(std::move(a));
            if (!lex_.accept(",")) {
                lex_.expect(")");
                break;
            }
        }
        return out;
    }

    // ---- argument helpers
    std::vector<const Arg*> positional(const std::vector<Arg>& args) {
        std::vector<const Arg*> out;
        for (const auto& a : args)
            if (!a.keyword) out.push_back(&a);
        return out;
    }
    const Arg* keyword(const std::vector<Arg>& args, std::string_view k) {
        for (const auto& a : args)
            if (a.keyword && *a.keyword == k) return &a;
        return nullptr;
    }
    void only_keywords(const std::vector<Arg>& args, std::initializer_list<std::string_view> allowed) {
        for (const auto& a : args) {
            if (!a.keyword) continue;
            if (std::find(allowed.begin(), allowed.end(), *a.keyword) == allowed.end())
                lex_.fail(a.at, "unexpected keyword argument '" + *a.keyword + "'");
        }
    }
    std::string str_arg(const Arg& a) {
        if (a.value.kind != RtValue::Kind::Scalar || !a.value.scalar.is_str()) lex_.fail(a.at, "expected a string");
        return a.value.scalar.as_str();
    }
    std::string ident_arg(const Arg& a) {
        if (a.value.kind == RtValue::Kind::Context) return a.value.ctx.ident;
        if (a.value.kind == RtValue::Kind::Forward) return a.value.ident;
        if (a.value.kind == RtValue::Kind::Scalar && a.value.scalar.is_str()) return a.value.scalar.as_str();
        lex_.fail(a.at, "expected a context, got " + describe(a.value));
    }
    std::string script_kw(const std::vector<Arg>& args) {
        if (const Arg* s = keyword(args, "script")) return ident_arg(*s);
        return in_.current_script_;
    }
    ValueOrSeq settable(const Arg& a) {
        if (a.value.kind == RtValue::Kind::Scalar) return a.value.scalar;
        if (a.value.kind == RtValue::Kind::List) {
            ValueSeq seq;
            for (const auto& i : a.value.items) {
                if (i.kind != RtValue::Kind::Scalar) lex_.fail(a.at, "sequence items must be scalars");
                seq.push_back(i.scalar);
            }
            return seq;
        }
        lex_.fail(a.at, "cannot set " + describe(a.value));
    }
    Node args_node(const std::vector<Arg>& args) {
        Node n = Node::list();
        for (const Arg* a : positional(args)) n.push_back(to_node(a->value, lex_, a->at));
        return n;
    }
    void add_pending(const std::string& in_script, PendingOp op) { study().script(in_script).add_pending(std::move(op)); }

    // ---- free functions and constructors
    RtValue call(const Token& fn, const std::vector<Arg>& args) {
        const std::string& f = fn.text;
        auto pos = positional(args);
        if (f == "load") {
            only_keywords(args, {"name", "script"});
            if (pos.size() != 1) lex_.fail(fn, "load() takes one file name");
            std::optional<std::string> ident;
            if (const Arg* n = keyword(args, "name")) ident = str_arg(*n);
            else if (target_) ident = *target_;
            std::filesystem::path p = str_arg(*pos[0]);
            if (p.is_relative() && !in_.base_dir_.empty()) p = in_.base_dir_ / p;
            Script& s = in_.load(p.string(), ident, script_kw(args));
            return RtValue::context(script_ref(s.ident()));
        }
        if (f == "script") {
            only_keywords(args, {"name", "script"});
            const Arg* n = keyword(args, "name");
            if (!n) lex_.fail(fn, "script() requires name='<ident>'");
            Script& s = study().create_script(str_arg(*n), script_kw(args));
            return RtValue::context(script_ref(s.ident()));
        }
        if (f == "compute" || f == "extract") {
            only_keywords(args, {"script"});
            add_pending(script_kw(args), {f == "compute" ? PendingOp::Kind::Compute : PendingOp::Kind::Extract, {},
                                          args_node(args)});
            return {};
        }
        if (f == "set_boot_objt") {
            only_keywords(args, {"script"});
            if (pos.size() != 1) lex_.fail(fn, "set_boot_objt() takes one description");
            add_pending(script_kw(args), {PendingOp::Kind::SetBoot, ident_arg(*pos[0]), Node::list()});
            return {};
        }
        if (f == "check") {
            only_keywords(args, {"prune"});
            bool prune = false;
            if (const Arg* p = keyword(args, "prune"))
                prune = p->value.kind == RtValue::Kind::Scalar && p->value.scalar.is_int() && p->value.scalar.as_int();
            if (in_.hooks_.check) in_.hooks_.check(root_ref(), prune);
            return {};
        }
        if (f == "dump") {
            std::string path = pos.empty() ? std::string() : str_arg(*pos[0]);
            if (in_.hooks_.dump) in_.hooks_.dump(root_ref(), path);
            return {};
        }
        if (f == "view") {
            if (in_.hooks_.view) in_.hooks_.view(root_ref());
            return {};
        }
        if (f == "man") {
            if (pos.size() != 1) lex_.fail(fn, "man() takes one topic");
            std::string topic = pos[0]->value.kind == RtValue::Kind::Scalar && pos[0]->value.scalar.is_str()
                                    ? pos[0]->value.scalar.as_str()
                                    : ident_arg(*pos[0]);
            if (in_.hooks_.man) in_.hooks_.man(topic);
            return {};
        }
        if (f == "close") {
            in_.closed_ = true;
            return {};
        }
        if (f == "provide") {
            if (pos.size() != 2) lex_.fail(fn, "provide() takes a class and an identifier");
            std::string cls = pos[0]->value.kind == RtValue::Kind::Forward ? pos[0]->value.ident : str_arg(*pos[0]);
            std::string ident = str_arg(*pos[1]);
            if (in_.hooks_.provide) return RtValue::context(desc_ref(in_.hooks_.provide(cls, ident).ident()));
            if (const Description* d = study().find_description(ident)) {
                if (d->cls().name != cls)
                    throw Error("provide_class", "'" + ident + "' exists with class '" + d->cls().name + "'", {},
                                "use another identifier for the " + cls + " description");
                return RtValue::context(desc_ref(ident));
            }
            return RtValue::context(desc_ref(study().create_description(cls, ident, in_.current_script_).ident()));
        }
        // class constructor
        only_keywords(args, {"name", "script"});
        if (!pos.empty()) lex_.fail(fn, "description constructors take keyword arguments only");
        const Arg* n = keyword(args, "name");
        if (!study().registry().find(f)) study().registry().at(f);  // throws with suggestion
        if (!n) lex_.fail(fn, f + "() requires name='<ident>'");
        Description& d = study().create_description(f, str_arg(*n), script_kw(args));
        return RtValue::context(desc_ref(d.ident()));
    }

    // ---- methods
    RtValue method(const RtValue& self, const Token& name, const std::vector<Arg>& args) {
        if (self.kind == RtValue::Kind::Forward)
            throw Error("unknown_ident", "no context named '" + self.ident + "'", {},
                        "create it before calling ." + name.text + "()");
        if (self.kind != RtValue::Kind::Context) lex_.fail(name, "cannot call ." + name.text + "() on " + describe(self));
        const std::string& m = name.text;
        auto pos = positional(args);
        const ContextRef& ref = self.ctx;

        if (m == "check") {
            bool prune = false;
            if (const Arg* p = keyword(args, "prune"))
                prune = p->value.kind == RtValue::Kind::Scalar && p->value.scalar.is_int() && p->value.scalar.as_int();
            if (in_.hooks_.check) in_.hooks_.check(ref, prune);
            return {};
        }
        if (m == "view") {
            if (in_.hooks_.view) in_.hooks_.view(ref);
            return {};
        }
        if (m == "dump") {
            std::string path = pos.empty() ? std::string() : str_arg(*pos[0]);
            if (in_.hooks_.dump) in_.hooks_.dump(ref, path);
            return {};
        }
        if (m == "copy") {
            only_keywords(args, {"name", "script"});
            const Arg* n = keyword(args, "name");
            if (!n) lex_.fail(name, "copy() requires name='<ident>'");
            return RtValue::context(study().copy(ref, str_arg(*n), script_kw(args)));
        }
        if (ref.kind == ChildRef::Kind::Script) {
            only_keywords(args, {});
            if (m == "compute" || m == "extract") {
                add_pending(ref.ident, {m == "compute" ? PendingOp::Kind::Compute : PendingOp::Kind::Extract, {},
                                        args_node(args)});
                return {};
            }
            if (m == "set_boot_objt") {
                if (pos.size() != 1) lex_.fail(name, "set_boot_objt() takes one description");
                add_pending(ref.ident, {PendingOp::Kind::SetBoot, ident_arg(*pos[0]), Node::list()});
                return {};
            }
            lex_.fail(name, "scripts have no method '" + m + "'");
        }

        Description& d = study().description(ref.ident);
        if (m == "set" || m == "set_interface") {
            only_keywords(args, {});
            std::size_t want = m == "set" ? 2 : 3;
            if (pos.size() != want) lex_.fail(name, m + "() takes " + std::to_string(want) + " arguments");
            Origin o = m == "set" ? Origin::user() : Origin::interface(str_arg(*pos[2]));
            study().set(d, str_arg(*pos[0]), settable(*pos[1]), o);
            return {};
        }
        if (m == "unset") {
            if (pos.size() != 1) lex_.fail(name, "unset() takes one attribute");
            study().unset(d, str_arg(*pos[0]));
            return {};
        }
        if (m == "get") {
            if (pos.size() != 1) lex_.fail(name, "get() takes one attribute");
            ValueOrSeq v = study().get(d, str_arg(*pos[0]));
            if (auto* s = std::get_if<Value>(&v)) return RtValue::of(*s);
            RtValue l;
            l.kind = RtValue::Kind::List;
            for (const auto& x : std::get<ValueSeq>(v)) l.items.push_back(RtValue::of(x));
            return l;
        }
        if (m == "attach") {
            only_keywords(args, {});
            std::vector<std::string> others;
            for (const Arg* a : pos) others.push_back(ident_arg(*a));
            study().attach(d, others);
            return {};
        }
        if (m == "compute" || m == "extract") {
            only_keywords(args, {"script"});
            add_pending(script_kw(args), {m == "compute" ? PendingOp::Kind::Compute : PendingOp::Kind::Extract,
                                          d.ident(), args_node(args)});
            return {};
        }
        if (m == "show_origin") {
            if (pos.size() != 1) lex_.fail(name, "show_origin() takes one attribute");
            if (in_.hooks_.show_origin) in_.hooks_.show_origin(d, str_arg(*pos[0]));
            return {};
        }
        lex_.fail(name, "descriptions have no method '" + m + "'");
    }

    Interpreter& in_;
    Lexer lex_;
    std::optional<std::string> target_;
};

// ---------------------------------------------------------------- Interpreter

Interpreter::Interpreter(Study& study, ScriptHooks hooks)
    : study_(study), hooks_(std::move(hooks)), current_script_(Study::kRootIdent) {}

void Interpreter::exec_statement(std::string_view line, int line_no) {
    try {
        StatementParser(*this, line, line_no).run();
    } catch (const ParseError& e) {
        throw ParseError(e.pos, e.token, std::string(origin_.empty() ? "" : origin_ + ": ") + e.what());
    } catch (const Error& e) {
        Diagnostic d = e.diagnostic();
        d.detail.push_back("at " + (origin_.empty() ? std::string("<input>") : origin_) + ", line " +
                           std::to_string(line_no));
        throw Error(d);
    }
}

void Interpreter::exec_line(std::string_view line) {
    if (closed_) return;
    exec_statement(line, 1);
}

void Interpreter::run_text(std::string_view text, std::string_view into_script, const std::string& origin,
                           const std::filesystem::path& base_dir) {
    std::string saved_script = current_script_;
    std::filesystem::path saved_dir = base_dir_;
    std::string saved_origin = origin_;
    current_script_ = std::string(into_script);
    base_dir_ = base_dir;
    origin_ = origin;
    closed_ = false;
    int line_no = 0;
    std::size_t start = 0;
    try {
        while (start <= text.size() && !closed_) {
            std::size_t end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            ++line_no;
            exec_statement(text.substr(start, end - start), line_no);
            start = end + 1;
        }
    } catch (...) {
        current_script_ = saved_script;
        base_dir_ = saved_dir;
        origin_ = saved_origin;
        throw;
    }
    current_script_ = saved_script;
    base_dir_ = saved_dir;
    origin_ = saved_origin;
}

void Interpreter::run_file(const std::string& path, std::string_view into_script) {
    std::filesystem::path canon = std::filesystem::weakly_canonical(path);
    for (const auto& p : loading_)
        if (p == canon)
            throw Error("include_cycle", "script '" + path + "' is already being loaded",
                        {"include chain ends with " + canon.string()}, "remove the recursive load() call");
    std::string text = read_text_file(path);
    loading_.push_back(canon);
    try {
        run_text(text, into_script, path, canon.parent_path());
    } catch (...) {
        loading_.pop_back();
        throw;
    }
    loading_.pop_back();
    // close() ends the file it appears in, not the includer
    if (loading_.size() > 0) closed_ = false;
}

Script& Interpreter::load(const std::string& path, std::optional<std::string> ident, std::string_view parent) {
    std::string id = ident ? *ident : std::filesystem::path(path).stem().string();
    std::filesystem::path canon = std::filesystem::weakly_canonical(path);
    for (const auto& p : loading_)
        if (p == canon)
            throw Error("include_cycle", "script '" + path + "' is already being loaded",
                        {"include chain ends with " + canon.string()}, "remove the recursive load() call");
    if (!std::filesystem::exists(canon))
        throw Error("no_file", "script file '" + path + "' does not exist", {}, "check the load() path");
    Script& s = study_.create_script(id, parent);
    run_file(path, s.ident());
    return s;
}

Script& load_script(Study& study, const std::string& path, std::optional<std::string> ident, std::string_view parent) {
    Interpreter in(study);
    return in.load(path, std::move(ident), parent);
}

void load_root(Study& study, const std::string& path, ScriptHooks hooks) {
    Interpreter in(study, std::move(hooks));
    in.run_file(path);
}

// ---------------------------------------------------------------- dump

std::string pending_op_text(const PendingOp& op, const std::string& in_script) {
    std::string kw = in_script.empty() ? std::string() : "script=" + quote_str(in_script);
    auto args = [&](bool lead) {
        std::string out;
        for (std::size_t i = 0; i < op.args.size(); ++i) out += (i || lead ? ", " : "") + to_notation(op.args[i]);
        return out;
    };
    if (op.kind == PendingOp::Kind::SetBoot)
        return "set_boot_objt(" + op.target + (kw.empty() ? "" : ", " + kw) + ")";
    std::string fn = op.kind == PendingOp::Kind::Compute ? "compute" : "extract";
    std::string head = op.target.empty() ? fn : op.target + "." + fn;
    std::string a = args(false);
    if (!kw.empty()) a += (a.empty() ? "" : ", ") + kw;
    return head + "(" + a + ")";
}

namespace {

void dump_desc(const Study& study, const Description& d, const std::string& in_script, std::string& out) {
    out += d.ident() + " = " + d.cls().name + "(name=" + quote_str(d.ident());
    if (!in_script.empty()) out += ", script=" + quote_str(in_script);
    out += ")\n";
    for (const auto& b : d.bindings()) {
        if (b.origin.kind == Origin::Kind::User)
            out += d.ident() + ".set(" + quote_str(b.attr) + ", " + b.value.repr() + ")  # user\n";
        else if (b.origin.kind == Origin::Kind::Interface)
            out += d.ident() + ".set_interface(" + quote_str(b.attr) + ", " + b.value.repr() + ", " +
                   quote_str(b.origin.detail) + ")\n";
    }
    if (!d.attachments().empty()) {
        out += d.ident() + ".attach(";
        for (std::size_t i = 0; i < d.attachments().size(); ++i) out += (i ? ", " : "") + d.attachments()[i];
        out += ")\n";
    }
    (void)study;
}

void dump_script(const Study& study, const Script& s, bool is_top, std::string& out) {
    const std::string in = is_top ? std::string() : s.ident();
    for (const auto& c : s.children()) {
        if (c.kind == ChildRef::Kind::Description) {
            dump_desc(study, study.description(c.ident), in, out);
        } else {
            out += c.ident + " = script(name=" + quote_str(c.ident);
            if (!in.empty()) out += ", script=" + quote_str(in);
            out += ")\n";
            dump_script(study, study.script(c.ident), false, out);
        }
    }
    for (const auto& op : s.pending_ops()) out += pending_op_text(op, in) + "\n";
}

}  // namespace

std::string dump_text(const Study& study, const ContextRef& ctx) {
    std::string out;
    if (ctx.kind == ChildRef::Kind::Description) {
        out += "# description '" + ctx.ident + "'\n";
        dump_desc(study, study.description(ctx.ident), {}, out);
    } else {
        out += "# script '" + ctx.ident + "'\n";
        dump_script(study, study.script(ctx.ident), true, out);
    }
    return out;
}

void dump_to_file(const Study& study, const ContextRef& ctx, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("dump_sink", "cannot write dump to '" + path + "'", {}, "check the directory permissions");
    f << dump_text(study, ctx);
    if (!f) throw Error("dump_sink", "failed writing dump to '" + path + "'", {}, "check free space");
}

Script& load_dump_text(Study& study, std::string_view text, const std::string& ident, std::string_view parent) {
    Script& s = parent == ident ? study.script(ident) : study.create_script(ident, parent);
    Interpreter in(study);
    in.run_text(text, s.ident(), "<dump '" + ident + "'>");
    return s;
}

}  // namespace ctxdesc
